//! Brute-force martingale expansion of `M_k` over subsets of `[k]`.

use super::kernel::PrecomputedKernel;
use crate::ensembles::Ensemble;
use crate::error::{Error, Result};
use crate::linalg::{mat_exp, norm2, op_norm, OperatorMatrix, Vector};

/// Largest `k` for which the `2^k - 1` subsets are enumerated.
pub const DOOB_MAX_K: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct DoobDecomposition {
    /// `M_k = e^{A_1/n} ... e^{A_k/n} x - (E e^{A/n})^k x`, computed directly.
    pub m_k: Vector,
    /// `D_{k,m}` for `m = 1..=k`.
    pub d_list: Vec<Vector>,
    /// `||M_k - Σ_m D_{k,m}|| / ||M_k||` (absolute when `M_k = 0`).
    pub identity_residual: f64,
    /// Largest `||F_{k,P}|| / ((2ρ/n)^{|P|} e^{kρ/n})` over all subsets.
    pub max_bound_ratio: f64,
    pub subsets: usize,
}

/// Expands `M_k` as `Σ_m D_{k,m}` with
/// `D_{k,m} = Σ_{P ⊂ [k], max P = m} F_{k,P} x`, where `F_{k,P}` is the
/// product over `j = 1..k` of `e^{A_j/n} - E e^{A/n}` for `j ∈ P` and
/// `E e^{A/n}` otherwise.
pub fn doob_decomposition(
    e: &Ensemble,
    n: usize,
    k: usize,
    draws: &[OperatorMatrix],
    x: &[f64],
    kern: &PrecomputedKernel,
) -> Result<DoobDecomposition> {
    if k > DOOB_MAX_K {
        return Err(Error::EnumerationTooLarge {
            k,
            limit: DOOB_MAX_K,
        });
    }
    if k == 0 || k > n || draws.len() < k {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= k <= n and k draws (k = {k}, n = {n}, {} draws)",
            draws.len()
        )));
    }
    if kern.n() != n || x.len() != e.dim() {
        return Err(Error::InvalidArgument("kernel or probe does not match".into()));
    }
    let d = e.dim();
    let inv_n = 1.0 / n as f64;
    let q = kern.mean_step();
    let steps: Vec<OperatorMatrix> = draws[..k]
        .iter()
        .map(|a| mat_exp(&a.scale(inv_n)))
        .collect::<Result<_>>()?;
    let jumps: Vec<OperatorMatrix> = steps.iter().map(|s| s.sub(q)).collect();

    let mut product = OperatorMatrix::identity(d);
    for s in &steps {
        product = product.matmul(s);
    }
    let m_k = product.sub(kern.mean_step_power(k)).apply(x);

    let rho = e.norm_bound();
    let scale = (k as f64 * rho * inv_n).exp();
    let mut d_list = vec![vec![0.0; d]; k];
    let mut max_bound_ratio = 0.0f64;
    for mask in 1u32..(1u32 << k) {
        let mut f = OperatorMatrix::identity(d);
        for (j, jump) in jumps.iter().enumerate() {
            f = if mask & (1 << j) != 0 {
                f.matmul(jump)
            } else {
                f.matmul(q)
            };
        }
        let size = mask.count_ones() as i32;
        let bound = (2.0 * rho * inv_n).powi(size) * scale;
        let norm = op_norm(&f)?;
        let ratio = if bound > 0.0 {
            norm / bound
        } else if norm == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        max_bound_ratio = max_bound_ratio.max(ratio);
        let top = (31 - mask.leading_zeros()) as usize;
        let fx = f.apply(x);
        d_list[top]
            .iter_mut()
            .zip(fx.iter())
            .for_each(|(acc, v)| *acc += v);
    }

    let mut total = vec![0.0; d];
    for dm in &d_list {
        total.iter_mut().zip(dm).for_each(|(t, v)| *t += v);
    }
    let resid: Vec<f64> = m_k.iter().zip(&total).map(|(a, b)| a - b).collect();
    let m_norm = m_k.norm();
    let identity_residual = if m_norm > 0.0 {
        norm2(&resid) / m_norm
    } else {
        norm2(&resid)
    };
    Ok(DoobDecomposition {
        m_k,
        d_list: d_list
            .into_iter()
            .map(|v| Vector::new(v).expect("finite"))
            .collect(),
        identity_residual,
        max_bound_ratio,
        subsets: (1usize << k) - 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::RngStream;

    fn ensemble() -> Ensemble {
        let a0 = OperatorMatrix::from_rows(&[[0.3, -0.7], [0.2, 0.1]]).unwrap();
        let a1 = OperatorMatrix::from_rows(&[[-0.5, 0.0], [0.6, 0.4]]).unwrap();
        Ensemble::two_point(a0, a1, 0.6).unwrap()
    }

    #[test]
    fn single_subset_for_k_one() {
        let e = ensemble();
        let n = 8;
        let kern = PrecomputedKernel::new(&e, n).unwrap();
        let draws = vec![e.atoms().unwrap().0[1].clone()];
        let x = [1.0, -2.0];
        let doob = doob_decomposition(&e, n, 1, &draws, &x, &kern).unwrap();
        assert_eq!(doob.subsets, 1);
        for (a, b) in doob.m_k.iter().zip(doob.d_list[0].iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_and_bounds_on_random_draws() {
        let e = ensemble();
        let n = 32;
        let kern = PrecomputedKernel::new(&e, n).unwrap();
        let mut rng = RngStream::new(21, 0);
        for k in 1..=10 {
            let draws: Vec<_> = (0..k).map(|_| e.sample(&mut rng)).collect();
            let doob = doob_decomposition(&e, n, k, &draws, &[0.4, 0.9], &kern).unwrap();
            assert!(doob.identity_residual < 1e-10, "k={k}: {doob:?}");
            assert!(doob.max_bound_ratio <= 1.0, "k={k}: {}", doob.max_bound_ratio);
            assert_eq!(doob.d_list.len(), k);
        }
    }

    #[test]
    fn rejects_large_k() {
        let e = ensemble();
        let kern = PrecomputedKernel::new(&e, 64).unwrap();
        let draws = vec![e.mean().clone(); 13];
        assert!(matches!(
            doob_decomposition(&e, 64, 13, &draws, &[1.0, 0.0], &kern),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }
}
