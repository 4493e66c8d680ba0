use proptest::prelude::*;

use opclt::covariance::{sigma_full, sigma_projected};
use opclt::dynamics::{sample_xi, PrecomputedKernel};
use opclt::ensembles::{Ensemble, RngStream};
use opclt::linalg::quadrature::gauss_legendre;
use opclt::linalg::{kron2, kron_vec, mat_exp, op_norm, OperatorMatrix};
use opclt::stats::{fit_slope, ks_test, summarize};

fn matrix(d: usize, scale: f64) -> impl Strategy<Value = OperatorMatrix> {
    prop::collection::vec(-scale..scale, d * d)
        .prop_map(move |v| OperatorMatrix::from_row_major(d, v).unwrap())
}

fn vector(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, d)
}

fn max_diff(a: &OperatorMatrix, b: &OperatorMatrix) -> f64 {
    a.sub(b).max_abs()
}

/// A random two-point ensemble of dimension `2..=4` with a probe pair.
fn ensemble_and_probes() -> impl Strategy<Value = (Ensemble, Vec<f64>, Vec<f64>)> {
    (2usize..=4).prop_flat_map(|d| {
        (matrix(d, 1.0), matrix(d, 1.0), 0.05f64..0.95, vector(d), vector(d)).prop_map(
            |(a, b, p, x, y)| (Ensemble::two_point(a, b, p).unwrap(), x, y),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_is_additive_on_commuting_diagonals(
        a in prop::collection::vec(-3.0f64..3.0, 3),
        b in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let a = OperatorMatrix::from_diag(&a).unwrap();
        let b = OperatorMatrix::from_diag(&b).unwrap();
        let lhs = mat_exp(&a.add(&b)).unwrap();
        let rhs = mat_exp(&a).unwrap().matmul(&mat_exp(&b).unwrap());
        prop_assert!(max_diff(&lhs, &rhs) <= 1e-12 * lhs.max_abs().max(1.0));
    }

    #[test]
    fn exp_is_additive_on_commuting_dense(m in matrix(3, 1.0), s in -2.0f64..2.0, t in -2.0f64..2.0) {
        // sM and tM² + M commute with each other.
        let a = m.scale(s);
        let b = m.matmul(&m).scale(t).add(&m);
        let lhs = mat_exp(&a.add(&b)).unwrap();
        let rhs = mat_exp(&a).unwrap().matmul(&mat_exp(&b).unwrap());
        prop_assert!(max_diff(&lhs, &rhs) <= 1e-11 * lhs.max_abs().max(1.0));
    }

    #[test]
    fn exp_norm_bounded_by_exp_of_norm(m in (1usize..=5).prop_flat_map(|d| matrix(d, 2.0))) {
        let lhs = op_norm(&mat_exp(&m).unwrap()).unwrap();
        let rhs = op_norm(&m).unwrap().exp();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
    }

    #[test]
    fn kron_mixed_product(
        a in matrix(3, 1.0), b in matrix(3, 1.0), c in matrix(3, 1.0), d in matrix(3, 1.0),
    ) {
        let lhs = kron2(&a, &b).unwrap().matmul(&kron2(&c, &d).unwrap());
        let rhs = kron2(&a.matmul(&c), &b.matmul(&d)).unwrap();
        prop_assert!(max_diff(&lhs, &rhs) <= 1e-12);
    }

    #[test]
    fn kron_acts_on_product_vectors(a in matrix(3, 1.0), b in matrix(3, 1.0), x in vector(3), y in vector(3)) {
        let lhs = kron2(&a, &b).unwrap().apply(&kron_vec(&x, &y));
        let rhs = kron_vec(&a.apply(&x), &b.apply(&y));
        for (l, r) in lhs.iter().zip(&rhs) {
            prop_assert!((l - r).abs() <= 1e-13);
        }
    }

    #[test]
    fn summarize_is_permutation_invariant(
        mut xs in prop::collection::vec(-10.0f64..10.0, 2..200),
        seed in any::<u64>(),
    ) {
        let a = summarize(&xs, 1.0).unwrap();
        // Fisher–Yates with a seeded stream.
        let mut rng = RngStream::new(seed, 0);
        for i in (1..xs.len()).rev() {
            let j = (rng.uniform() * (i + 1) as f64) as usize;
            xs.swap(i, j);
        }
        let b = summarize(&xs, 1.0).unwrap();
        let close = |u: f64, v: f64| (u - v).abs() <= 1e-9 * (1.0 + u.abs());
        prop_assert!(close(a.mean, b.mean));
        prop_assert!(close(a.variance, b.variance));
        prop_assert!(close(a.skewness, b.skewness));
        prop_assert!(close(a.excess_kurtosis, b.excess_kurtosis));
        prop_assert_eq!(a.ks_distance, b.ks_distance);
        prop_assert_eq!((a.min, a.max), (b.min, b.max));
    }

    #[test]
    fn ks_invariant_under_joint_rescaling(
        xs in prop::collection::vec(-3.0f64..3.0, 1..300),
        sigma2 in 0.1f64..4.0,
        lambda in 0.01f64..100.0,
    ) {
        let a = ks_test(&xs, sigma2).unwrap();
        let scaled: Vec<f64> = xs.iter().map(|x| x * lambda).collect();
        let b = ks_test(&scaled, sigma2 * lambda * lambda).unwrap();
        prop_assert!((a.distance - b.distance).abs() <= 1e-12);
    }

    #[test]
    fn slope_recovers_exact_power_law(c in 0.01f64..100.0, alpha in -3.0f64..3.0) {
        let pts: Vec<(f64, f64)> = [16.0, 64.0, 256.0, 4096.0]
            .iter()
            .map(|&n: &f64| (n, c * n.powf(alpha)))
            .collect();
        let fit = fit_slope(&pts).unwrap();
        prop_assert!((fit.slope - alpha).abs() <= 1e-10);
    }

    #[test]
    fn projected_variance_matches_full_and_is_nonnegative((e, x, y) in ensemble_and_probes()) {
        let proj = sigma_projected(&e, &x, &y).unwrap();
        let form = sigma_full(&e).unwrap().quadratic_form(&x, &y).unwrap();
        prop_assert!(proj >= 0.0);
        prop_assert!((proj - form).abs() <= 1e-10 * proj.abs().max(1e-300), "{proj} vs {form}");
    }

    #[test]
    fn shift_multiplies_variance((e, x, y) in ensemble_and_probes(), c in -1.0f64..1.0) {
        let base = sigma_projected(&e, &x, &y).unwrap();
        let shifted = sigma_projected(&e.shifted(c).unwrap(), &x, &y).unwrap();
        prop_assert!((shifted - (2.0 * c).exp() * base).abs() <= 1e-10 * shifted.abs().max(1e-300));
    }

    #[test]
    fn trajectory_bounds(
        (e, x, y) in ensemble_and_probes(),
        n in 1usize..200,
        seed in any::<u64>(),
    ) {
        let kern = PrecomputedKernel::new(&e, n).unwrap();
        let t = sample_xi(&e, n, &x, &y, &mut RngStream::new(seed, 1), &kern).unwrap();
        let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rho = e.norm_bound();
        prop_assert!(t.projected_xi.abs() <= ynorm * t.xi_x.norm() * (1.0 + 1e-12) + 1e-300);
        prop_assert!(t.xi_x.norm() <= (n as f64).sqrt() * 2.0 * rho.exp() * xnorm * (1.0 + 1e-12));
    }

    #[test]
    fn streams_replay(seed in any::<u64>(), stream in any::<u64>()) {
        let e = Ensemble::diagonal_uniform(3, -1.0, 2.0).unwrap();
        let mut a = RngStream::new(seed, stream);
        let mut b = RngStream::new(seed, stream);
        for _ in 0..5 {
            prop_assert_eq!(e.sample(&mut a), e.sample(&mut b));
        }
        prop_assert_eq!(a.draw_counter(), b.draw_counter());
    }
}

#[test]
fn gauss_legendre_weights_sum_to_one() {
    for m in 1..=512 {
        let rule = gauss_legendre(m).unwrap();
        let total: f64 = rule.weights().iter().sum();
        assert!((total - 1.0).abs() <= 1e-14, "m = {m}: {total}");
        assert!(rule.weights().iter().all(|&w| w > 0.0));
    }
}
