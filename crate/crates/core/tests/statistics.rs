use rand::Rng;
use rand_distr::StandardNormal;

use opclt::ensembles::{Ensemble, RngStream};
use opclt::linalg::{kron_vec, op_norm, OperatorMatrix};
use opclt::stats::{fit_slope, ks_test, summarize};

fn families() -> Vec<(&'static str, Ensemble)> {
    let a = OperatorMatrix::from_rows(&[[0.2, -0.7, 0.1], [0.4, 0.0, 0.3], [-0.5, 0.6, -0.1]]).unwrap();
    let b = OperatorMatrix::from_rows(&[[-0.3, 0.2, 0.0], [0.1, 0.5, -0.4], [0.0, -0.2, 0.8]]).unwrap();
    let c = OperatorMatrix::from_diag(&[1.0, -1.0, 0.25]).unwrap();
    vec![
        ("two_point", Ensemble::two_point(a.clone(), b.clone(), 0.3).unwrap()),
        (
            "finite_support",
            Ensemble::finite_support(vec![a.clone(), b, c], vec![0.2, 0.5, 0.3]).unwrap(),
        ),
        ("diagonal_uniform", Ensemble::diagonal_uniform(3, -0.5, 1.5).unwrap()),
        ("deterministic", Ensemble::deterministic(a).unwrap()),
    ]
}

#[test]
fn draws_respect_the_norm_bound() {
    for (name, e) in families() {
        let rho = e.norm_bound();
        let mut rng = RngStream::new(11, 0);
        for _ in 0..10_000 {
            let norm = op_norm(&e.sample(&mut rng)).unwrap();
            assert!(norm <= rho * (1.0 + 1e-12), "{name}: {norm} > {rho}");
        }
    }
}

/// Monte Carlo of `E (A - EA)u ⊗ (A - EA)u` against the exact central
/// second moment applied to `u ⊗ u`, entry by entry within 4 standard errors.
#[test]
fn central_second_moment_matches_monte_carlo() {
    let u = [0.6, -0.3, 0.74];
    let reps = 200_000;
    for (name, e) in families() {
        let exact = e.central_second_moment().unwrap().apply(&kron_vec(&u, &u));
        let d2 = exact.len();
        let mut sum = vec![0.0; d2];
        let mut sum_sq = vec![0.0; d2];
        let mut rng = RngStream::new(12, 0);
        for _ in 0..reps {
            let v = e.sample(&mut rng).sub(e.mean()).apply(&u);
            for (k, z) in kron_vec(&v, &v).iter().enumerate() {
                sum[k] += z;
                sum_sq[k] += z * z;
            }
        }
        let r = reps as f64;
        for k in 0..d2 {
            let mean = sum[k] / r;
            let var = (sum_sq[k] / r - mean * mean).max(0.0) * r / (r - 1.0);
            let se = (var / r).sqrt();
            let gap = (mean - exact[k]).abs();
            assert!(gap <= 4.0 * se + 1e-12, "{name}[{k}]: mc {mean} exact {} se {se}", exact[k]);
        }
    }
}

/// RMS error of the Monte Carlo mean over independent streams shrinks like
/// `reps^(-1/2)`.
#[test]
fn mean_estimate_error_rate() {
    let streams = 16;
    for (name, e) in families().into_iter().filter(|(n, _)| *n != "deterministic") {
        let mut pts = Vec::new();
        for (level, &reps) in [1_000usize, 10_000, 100_000, 1_000_000].iter().enumerate() {
            let mut sq = 0.0;
            for s in 0..streams {
                let mut rng = RngStream::new(13 + level as u64, s);
                let est = e.estimate_mean_mc(reps, &mut rng).unwrap();
                sq += est.sub(e.mean()).frobenius_norm().powi(2);
            }
            pts.push((reps as f64, (sq / streams as f64).sqrt()));
        }
        let fit = fit_slope(&pts).unwrap();
        assert!(fit.within(-0.5, 0.15), "{name}: slope {}", fit.slope);
    }
}

#[test]
fn deterministic_mean_estimate_is_exact() {
    let (_, e) = families().pop().unwrap();
    let est = e.estimate_mean_mc(1000, &mut RngStream::new(0, 0)).unwrap();
    assert_eq!(est, *e.mean());
}

#[test]
fn symmetric_uniform_diagonal_has_centred_mean() {
    let e = Ensemble::diagonal_uniform(2, -1.0, 1.0).unwrap();
    let est = e.estimate_mean_mc(1_000_000, &mut RngStream::new(14, 0)).unwrap();
    assert!(est.max_abs() <= 0.01, "{}", est.max_abs());
    assert_eq!(e.mean().max_abs(), 0.0);
}

#[test]
fn two_point_mean_estimate() {
    let e = Ensemble::two_point(OperatorMatrix::scalar(0.0), OperatorMatrix::scalar(2.0), 0.5).unwrap();
    let est = e.estimate_mean_mc(1_000_000, &mut RngStream::new(15, 0)).unwrap();
    // sd of the estimate is 1e-3
    assert!((est[(0, 0)] - 1.0).abs() <= 5e-3);
}

fn normal_draws(seed: u64, stream: u64, count: usize, sd: f64) -> Vec<f64> {
    let mut rng = RngStream::new(seed, stream);
    (0..count)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

#[test]
fn ks_accepts_true_normals_at_the_nominal_rate() {
    let sigma2: f64 = 0.6;
    let passes = (0..100)
        .filter(|&s| {
            let xs = normal_draws(16, s, 100_000, sigma2.sqrt());
            ks_test(&xs, sigma2).unwrap().passes()
        })
        .count();
    assert!(passes >= 95, "{passes}/100");
}

#[test]
fn ks_rejects_a_wrong_variance() {
    let xs = normal_draws(17, 0, 100_000, 1.0);
    assert!(!ks_test(&xs, 1.1).unwrap().passes());
}

#[test]
fn moments_of_normal_draws() {
    let sigma2: f64 = 2.5;
    let n = 1_000_000;
    let st = summarize(&normal_draws(18, 0, n, sigma2.sqrt()), sigma2).unwrap();
    let band = 3.0 * (2.0 / n as f64).sqrt();
    assert!((st.variance / sigma2 - 1.0).abs() <= band, "{}", st.variance);
    assert!(st.mean.abs() <= 4.0 * (sigma2 / n as f64).sqrt());
    assert!(st.skewness.abs() <= 0.01, "{}", st.skewness);
    assert!(st.excess_kurtosis.abs() <= 0.02, "{}", st.excess_kurtosis);
    assert_eq!(st.count, n);
}
