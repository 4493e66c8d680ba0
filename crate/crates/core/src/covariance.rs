//! The limit covariance
//! `Σ = ∫_0^1 (e^{E A s})^{⊗2} E(A - E A)^{⊗2} (e^{E A (1-s)})^{⊗2} ds`
//! and its projections `<y^{⊗2}, Σ x^{⊗2}>`.
//!
//! Three routes are provided and cross-checked in tests: a materialized
//! `d² x d²` quadrature, a matrix-free projected quadrature, and a closed form
//! for diagonal (commuting) ensembles.

use crate::ensembles::Ensemble;
use crate::error::{Error, Result};
use crate::linalg::quadrature::{integrate_adaptive, integrate_adaptive_vec, AdaptiveIntegral};
use crate::linalg::{dot, kron2, kron_vec, mat_exp, OperatorMatrix};

/// Largest dimension for which the `d² x d²` matrix is materialized.
pub const MATERIALIZE_LIMIT: usize = 16;

#[derive(Debug, Clone)]
enum Evaluator {
    Quadrature(Box<Ensemble>),
    /// Diagonal families: `rates[i]` is the `i`-th diagonal entry of `E A`
    /// and `cov[i][j]` the covariance of diagonal entries `i` and `j`.
    Commuting {
        rates: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
}

/// The covariance `Σ`, optionally materialized, with a projected evaluator.
#[derive(Debug, Clone)]
pub struct CovarianceOperator {
    dim: usize,
    full: Option<OperatorMatrix>,
    evaluator: Evaluator,
}

impl CovarianceOperator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn full(&self) -> Option<&OperatorMatrix> {
        self.full.as_ref()
    }

    /// `<y^{⊗2}, Σ x^{⊗2}>`, computed without the materialized matrix.
    pub fn projected(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_probe(self.dim, x)?;
        check_probe(self.dim, y)?;
        match &self.evaluator {
            Evaluator::Quadrature(e) => Ok(projected_quadrature(e, x, y)?.value),
            Evaluator::Commuting { rates, cov } => {
                let d = self.dim;
                let mut acc = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        let rate = rates[i] + rates[j];
                        acc += y[i] * y[j] * x[i] * x[j] * cov[i][j] * exp_mixture(rate, rate);
                    }
                }
                Ok(acc)
            }
        }
    }

    /// The explicit quadratic form `<y ⊗ y, Σ (x ⊗ x)>` of the materialized
    /// matrix.
    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let full = self.full.as_ref().ok_or(Error::TooLarge {
            dim: self.dim,
            limit: MATERIALIZE_LIMIT,
        })?;
        check_probe(self.dim, x)?;
        check_probe(self.dim, y)?;
        Ok(dot(&kron_vec(y, y), &full.apply(&kron_vec(x, x))))
    }

    /// Frobenius norm of `Σ - Σ^T`. Diagnostic only; nonzero in general for
    /// non-symmetric ensembles.
    pub fn symmetry_defect(&self) -> Option<f64> {
        self.full
            .as_ref()
            .map(|f| f.sub(&f.transpose()).frobenius_norm())
    }
}

fn check_probe(dim: usize, v: &[f64]) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    Ok(())
}

/// `∫_0^1 e^{α s} e^{β (1-s)} ds`.
pub fn exp_mixture(alpha: f64, beta: f64) -> f64 {
    let delta = alpha - beta;
    if delta == 0.0 {
        alpha.exp()
    } else {
        // (e^α - e^β)/(α - β) = e^β (e^{α-β} - 1)/(α - β)
        beta.exp() * delta.exp_m1() / delta
    }
}

/// Σ as a `d² x d²` matrix, by adaptive Gauss–Legendre quadrature of the
/// Kronecker-lifted integrand.
pub fn sigma_full(e: &Ensemble) -> Result<CovarianceOperator> {
    let d = e.dim();
    if d > MATERIALIZE_LIMIT {
        return Err(Error::TooLarge {
            dim: d,
            limit: MATERIALIZE_LIMIT,
        });
    }
    let c = e.central_second_moment()?;
    let mean = e.mean().clone();
    let integral = integrate_adaptive_vec(|s| {
        let left = mat_exp(&mean.scale(s)).expect("finite mean");
        let right = mat_exp(&mean.scale(1.0 - s)).expect("finite mean");
        let left = kron2(&left, &left).expect("same dims");
        let right = kron2(&right, &right).expect("same dims");
        left.matmul(&c).matmul(&right).as_slice().to_vec()
    });
    let full = OperatorMatrix::from_row_major(d * d, integral.value)?;
    Ok(CovarianceOperator {
        dim: d,
        full: Some(full),
        evaluator: Evaluator::Quadrature(Box::new(e.clone())),
    })
}

/// Covariance handle for any dimension, without materialization.
pub fn sigma_operator(e: &Ensemble) -> CovarianceOperator {
    CovarianceOperator {
        dim: e.dim(),
        full: None,
        evaluator: Evaluator::Quadrature(Box::new(e.clone())),
    }
}

/// Integrand of the projected covariance at `s`:
/// `<w ⊗ w, C (u ⊗ u)>` with `u = e^{E A (1-s)} x` and `w = (e^{E A s})^T y`.
pub fn projected_integrand(e: &Ensemble, x: &[f64], y: &[f64], s: f64) -> f64 {
    let mean = e.mean();
    let u = mat_exp(&mean.scale(1.0 - s)).expect("finite mean").apply(x);
    let w = mat_exp(&mean.scale(s))
        .expect("finite mean")
        .apply_transpose(y);
    e.second_moment_form(&w, &u)
}

/// Matrix-free `<y^{⊗2}, Σ x^{⊗2}>` with convergence details.
pub fn projected_quadrature(e: &Ensemble, x: &[f64], y: &[f64]) -> Result<AdaptiveIntegral<f64>> {
    check_probe(e.dim(), x)?;
    check_probe(e.dim(), y)?;
    Ok(integrate_adaptive(|s| projected_integrand(e, x, y, s)))
}

/// Matrix-free `<y^{⊗2}, Σ x^{⊗2}>`.
pub fn sigma_projected(e: &Ensemble, x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(projected_quadrature(e, x, y)?.value)
}

/// Closed-form Σ for ensembles whose support is diagonal.
pub fn sigma_commuting_oracle(e: &Ensemble) -> Result<CovarianceOperator> {
    let cov = e.diagonal_covariance().ok_or_else(|| {
        Error::Unsupported("commuting closed form needs diagonal support".into())
    })?;
    let d = e.dim();
    let rates = e.mean().diag();
    let full = if d <= MATERIALIZE_LIMIT {
        let dd = d * d;
        let mut m = OperatorMatrix::zeros(dd);
        // (X ⊗ X)[(i,j),(k,l)] = X[i,k] X[j,l] vanishes off i = k, j = l for
        // diagonal X, so C and Σ are diagonal in the lifted index.
        for i in 0..d {
            for j in 0..d {
                let idx = i * d + j;
                let rate = rates[i] + rates[j];
                m[(idx, idx)] = cov[i][j] * exp_mixture(rate, rate);
            }
        }
        Some(m)
    } else {
        None
    };
    Ok(CovarianceOperator {
        dim: d,
        full,
        evaluator: Evaluator::Commuting { rates, cov },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::quadrature::gauss_legendre;

    fn scalar_bernoulli() -> Ensemble {
        Ensemble::two_point(OperatorMatrix::scalar(0.0), OperatorMatrix::scalar(1.0), 0.5).unwrap()
    }

    #[test]
    fn exp_mixture_closed_forms() {
        assert_eq!(exp_mixture(0.0, 0.0), 1.0);
        let expected = (2f64.exp() - 1.0) / 2.0;
        assert!((exp_mixture(2.0, 0.0) - expected).abs() < 1e-15);
        assert!((exp_mixture(0.0, 2.0) - expected).abs() < 1e-15);
        let rule = gauss_legendre(32).unwrap();
        let q = rule.integrate(|s| (-1.3 * s).exp() * (0.4 * (1.0 - s)).exp());
        assert!((exp_mixture(-1.3, 0.4) - q).abs() < 1e-15);
    }

    #[test]
    fn deterministic_sigma_is_zero() {
        let m = OperatorMatrix::from_rows(&[[0.3, -0.2], [0.1, 0.5]]).unwrap();
        let e = Ensemble::deterministic(m).unwrap();
        let s = sigma_full(&e).unwrap();
        assert_eq!(s.full().unwrap().max_abs(), 0.0);
        assert_eq!(sigma_projected(&e, &[1.0, 2.0], &[0.5, -1.0]).unwrap(), 0.0);
    }

    #[test]
    fn scalar_bernoulli_is_e_over_four() {
        let e = scalar_bernoulli();
        let expected = 1f64.exp() / 4.0;
        let full = sigma_full(&e).unwrap();
        assert!((full.full().unwrap()[(0, 0)] - expected).abs() < 1e-14);
        assert!((sigma_projected(&e, &[1.0], &[1.0]).unwrap() - expected).abs() < 1e-14);
        let oracle = sigma_commuting_oracle(&e).unwrap();
        assert!((oracle.full().unwrap()[(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_probe_gives_zero() {
        let e = Ensemble::diagonal_uniform(3, -1.0, 0.5).unwrap();
        assert_eq!(sigma_projected(&e, &[0.0; 3], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn commuting_oracle_rejects_non_diagonal() {
        let a = OperatorMatrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        let e = Ensemble::two_point(a, OperatorMatrix::zeros(2), 0.5).unwrap();
        assert!(sigma_commuting_oracle(&e).is_err());
    }

    #[test]
    fn too_large_for_materialization() {
        let e = Ensemble::diagonal_uniform(17, 0.0, 1.0).unwrap();
        assert!(matches!(sigma_full(&e), Err(Error::TooLarge { .. })));
        let op = sigma_operator(&e);
        assert!(op.quadratic_form(&[0.0; 17], &[0.0; 17]).is_err());
        // the closed form still evaluates projections
        let oracle = sigma_commuting_oracle(&e).unwrap();
        assert!(oracle.full().is_none());
        let mut x = vec![0.0; 17];
        x[3] = 1.0;
        let expected = (1.0 / 12.0) * 1f64.exp();
        assert!((oracle.projected(&x, &x).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn probe_dimension_checked() {
        let e = scalar_bernoulli();
        assert!(sigma_projected(&e, &[1.0, 0.0], &[1.0]).is_err());
    }
}
