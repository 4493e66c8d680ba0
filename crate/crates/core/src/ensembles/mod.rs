//! Bounded random-operator ensembles with exact moments.

mod rng;

pub use rng::RngStream;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kron2, mat_exp, op_norm, OperatorMatrix};

/// Declarative description of an ensemble, as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnsembleSpec {
    /// Draws `first` with probability `p`, otherwise `second`.
    TwoPoint {
        first: Vec<Vec<f64>>,
        second: Vec<Vec<f64>>,
        p: f64,
    },
    FiniteSupport {
        matrices: Vec<Vec<Vec<f64>>>,
        probabilities: Vec<f64>,
    },
    /// Diagonal matrices with i.i.d. entries uniform on `[lo, hi]`.
    DiagonalUniform { dim: usize, lo: f64, hi: f64 },
    Deterministic { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    TwoPoint,
    FiniteSupport,
    DiagonalUniform,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq)]
enum Support {
    Finite {
        atoms: Vec<OperatorMatrix>,
        probs: Vec<f64>,
        cumulative: Vec<f64>,
    },
    DiagonalUniform {
        lo: f64,
        hi: f64,
    },
}

/// One realization of the random operator, in the cheapest form the family
/// allows: an atom index for finite supports, the diagonal otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum Draw {
    Atom(usize),
    Diagonal(Vec<f64>),
}

/// A distribution over `d x d` operators with norm bounded by `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    dim: usize,
    kind: FamilyKind,
    support: Support,
    mean: OperatorMatrix,
    rho: f64,
}

impl Ensemble {
    pub fn two_point(first: OperatorMatrix, second: OperatorMatrix, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidEnsemble(format!(
                "two_point probability {p} outside [0, 1]"
            )));
        }
        let mut e = Self::finite_support(vec![first, second], vec![p, 1.0 - p])?;
        e.kind = FamilyKind::TwoPoint;
        Ok(e)
    }

    pub fn finite_support(atoms: Vec<OperatorMatrix>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidEnsemble("empty support".into()));
        }
        if atoms.len() != probs.len() {
            return Err(Error::InvalidEnsemble(format!(
                "{} matrices but {} probabilities",
                atoms.len(),
                probs.len()
            )));
        }
        let dim = atoms[0].dim();
        if let Some(bad) = atoms.iter().find(|a| a.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidEnsemble(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidEnsemble(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let mut mean = OperatorMatrix::zeros(dim);
        for (a, &p) in atoms.iter().zip(&probs) {
            mean = mean.axpy(p, a);
        }
        let mut rho = 0.0f64;
        for a in &atoms {
            rho = rho.max(op_norm(a)?);
        }
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        Ok(Ensemble {
            dim,
            kind: FamilyKind::FiniteSupport,
            support: Support::Finite {
                atoms,
                probs,
                cumulative,
            },
            mean,
            rho,
        })
    }

    pub fn diagonal_uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyDimension);
        }
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::InvalidEnsemble(format!(
                "diagonal_uniform needs finite lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Ensemble {
            dim,
            kind: FamilyKind::DiagonalUniform,
            support: Support::DiagonalUniform { lo, hi },
            mean: OperatorMatrix::identity(dim).scale(0.5 * (lo + hi)),
            rho: lo.abs().max(hi.abs()),
        })
    }

    pub fn deterministic(matrix: OperatorMatrix) -> Result<Self> {
        let mut e = Self::finite_support(vec![matrix], vec![1.0])?;
        e.kind = FamilyKind::Deterministic;
        Ok(e)
    }

    pub fn from_spec(spec: &EnsembleSpec) -> Result<Self> {
        match spec {
            EnsembleSpec::TwoPoint { first, second, p } => Self::two_point(
                OperatorMatrix::from_rows(first)?,
                OperatorMatrix::from_rows(second)?,
                *p,
            ),
            EnsembleSpec::FiniteSupport {
                matrices,
                probabilities,
            } => Self::finite_support(
                matrices
                    .iter()
                    .map(|m| OperatorMatrix::from_rows(m))
                    .collect::<Result<_>>()?,
                probabilities.clone(),
            ),
            EnsembleSpec::DiagonalUniform { dim, lo, hi } => Self::diagonal_uniform(*dim, *lo, *hi),
            EnsembleSpec::Deterministic { matrix } => {
                Self::deterministic(OperatorMatrix::from_rows(matrix)?)
            }
        }
    }

    /// The law of `A + cI`.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        let mut out = match &self.support {
            Support::Finite { atoms, probs, .. } => Self::finite_support(
                atoms.iter().map(|a| a.add_identity(c)).collect(),
                probs.clone(),
            )?,
            Support::DiagonalUniform { lo, hi } => Self::diagonal_uniform(self.dim, lo + c, hi + c)?,
        };
        out.kind = self.kind;
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// Norm bound `rho >= ||A||`, computed from the support.
    pub fn norm_bound(&self) -> f64 {
        self.rho
    }

    /// Exact expectation `E A`.
    pub fn mean(&self) -> &OperatorMatrix {
        &self.mean
    }

    /// Atoms and their probabilities, for finite-support families.
    pub fn atoms(&self) -> Option<(&[OperatorMatrix], &[f64])> {
        match &self.support {
            Support::Finite { atoms, probs, .. } => Some((atoms, probs)),
            Support::DiagonalUniform { .. } => None,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        match &self.support {
            Support::Finite { atoms, .. } => atoms.iter().all(OperatorMatrix::is_diagonal),
            Support::DiagonalUniform { .. } => true,
        }
    }

    /// Zero variance: every draw equals the mean.
    pub fn is_degenerate(&self) -> bool {
        match &self.support {
            Support::Finite { atoms, probs, .. } => atoms
                .iter()
                .zip(probs)
                .all(|(a, &p)| p == 0.0 || *a == self.mean),
            Support::DiagonalUniform { lo, hi } => lo == hi,
        }
    }

    pub fn draw(&self, rng: &mut RngStream) -> Draw {
        match &self.support {
            Support::Finite { cumulative, .. } => {
                if cumulative.len() == 1 {
                    return Draw::Atom(0);
                }
                let u = rng.uniform();
                let last = cumulative.len() - 1;
                Draw::Atom(cumulative[..last].partition_point(|&c| c <= u))
            }
            Support::DiagonalUniform { lo, hi } => Draw::Diagonal(
                (0..self.dim)
                    .map(|_| lo + (hi - lo) * rng.uniform())
                    .collect(),
            ),
        }
    }

    pub fn draw_matrix(&self, draw: &Draw) -> OperatorMatrix {
        match (draw, &self.support) {
            (Draw::Atom(i), Support::Finite { atoms, .. }) => atoms[*i].clone(),
            (Draw::Diagonal(diag), _) => {
                OperatorMatrix::from_diag(diag).expect("finite draw")
            }
            (Draw::Atom(_), Support::DiagonalUniform { .. }) => {
                unreachable!("atom draw from a continuous family")
            }
        }
    }

    /// One draw of the random operator.
    pub fn sample(&self, rng: &mut RngStream) -> OperatorMatrix {
        let draw = self.draw(rng);
        self.draw_matrix(&draw)
    }

    /// Exact `E (A - E A) ⊗ (A - E A)` as a `d² x d²` matrix.
    pub fn central_second_moment(&self) -> Result<OperatorMatrix> {
        let d = self.dim;
        match &self.support {
            Support::Finite { atoms, probs, .. } => {
                let mut c = OperatorMatrix::zeros(d * d);
                for (a, &p) in atoms.iter().zip(probs) {
                    let centered = a.sub(&self.mean);
                    c = c.axpy(p, &kron2(&centered, &centered)?);
                }
                Ok(c)
            }
            Support::DiagonalUniform { lo, hi } => {
                let var = (hi - lo) * (hi - lo) / 12.0;
                let mut c = OperatorMatrix::zeros(d * d);
                for i in 0..d {
                    let idx = i * d + i;
                    c[(idx, idx)] = var;
                }
                Ok(c)
            }
        }
    }

    /// `<w ⊗ w, C (u ⊗ u)>` with `C` the central second moment, evaluated
    /// without forming `C`.
    pub fn second_moment_form(&self, w: &[f64], u: &[f64]) -> f64 {
        match &self.support {
            Support::Finite { atoms, probs, .. } => atoms
                .iter()
                .zip(probs)
                .map(|(a, &p)| {
                    let centered = a.sub(&self.mean);
                    let proj = crate::linalg::dot(w, &centered.apply(u));
                    p * proj * proj
                })
                .sum(),
            Support::DiagonalUniform { lo, hi } => {
                let var = (hi - lo) * (hi - lo) / 12.0;
                var * w
                    .iter()
                    .zip(u)
                    .map(|(a, b)| (a * b) * (a * b))
                    .sum::<f64>()
            }
        }
    }

    /// For diagonal families, `cov[i][j] = E (a_i - b_i)(a_j - b_j)` where
    /// `a` is the random diagonal and `b` its mean. `None` otherwise.
    pub fn diagonal_covariance(&self) -> Option<Vec<Vec<f64>>> {
        if !self.is_diagonal() {
            return None;
        }
        let d = self.dim;
        let mut cov = vec![vec![0.0; d]; d];
        match &self.support {
            Support::Finite { atoms, probs, .. } => {
                for (a, &p) in atoms.iter().zip(probs) {
                    for i in 0..d {
                        for j in 0..d {
                            cov[i][j] += p
                                * (a[(i, i)] - self.mean[(i, i)])
                                * (a[(j, j)] - self.mean[(j, j)]);
                        }
                    }
                }
            }
            Support::DiagonalUniform { lo, hi } => {
                let var = (hi - lo) * (hi - lo) / 12.0;
                for (i, row) in cov.iter_mut().enumerate() {
                    row[i] = var;
                }
            }
        }
        Some(cov)
    }

    /// Exact `E e^{A t}`.
    pub fn mean_exp(&self, t: f64) -> Result<OperatorMatrix> {
        match &self.support {
            Support::Finite { atoms, probs, .. } => {
                let mut acc = OperatorMatrix::zeros(self.dim);
                for (a, &p) in atoms.iter().zip(probs) {
                    acc = acc.axpy(p, &mat_exp(&a.scale(t))?);
                }
                Ok(acc)
            }
            Support::DiagonalUniform { lo, hi } => {
                let width = (hi - lo) * t;
                let factor = if width == 0.0 {
                    1.0
                } else {
                    width.exp_m1() / width
                };
                let entry = (lo * t).exp() * factor;
                Ok(OperatorMatrix::identity(self.dim).scale(entry))
            }
        }
    }

    /// Sample average of `reps` draws.
    pub fn estimate_mean_mc(&self, reps: usize, rng: &mut RngStream) -> Result<OperatorMatrix> {
        if reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if let Support::Finite { atoms, .. } = &self.support {
            if atoms.len() == 1 {
                return Ok(atoms[0].clone());
            }
            let mut counts = vec![0u64; atoms.len()];
            for _ in 0..reps {
                if let Draw::Atom(i) = self.draw(rng) {
                    counts[i] += 1;
                }
            }
            let mut acc = OperatorMatrix::zeros(self.dim);
            for (a, &c) in atoms.iter().zip(&counts) {
                acc = acc.axpy(c as f64 / reps as f64, a);
            }
            return Ok(acc);
        }
        let mut acc = vec![0.0; self.dim * self.dim];
        for _ in 0..reps {
            let m = self.sample(rng);
            acc.iter_mut().zip(m.as_slice()).for_each(|(a, v)| *a += v);
        }
        OperatorMatrix::from_row_major(self.dim, acc.into_iter().map(|v| v / reps as f64).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_two_point(a0: f64, a1: f64, p: f64) -> Ensemble {
        Ensemble::two_point(OperatorMatrix::scalar(a0), OperatorMatrix::scalar(a1), p).unwrap()
    }

    #[test]
    fn deterministic_always_returns_matrix() {
        let m = OperatorMatrix::from_rows(&[[0.1, 0.2], [0.3, -0.4]]).unwrap();
        let e = Ensemble::deterministic(m.clone()).unwrap();
        let mut r = RngStream::new(1, 2);
        for _ in 0..10 {
            assert_eq!(e.sample(&mut r), m);
        }
        assert_eq!(e.mean(), &m);
        assert!(e.is_degenerate());
        assert_eq!(e.central_second_moment().unwrap(), OperatorMatrix::zeros(4));
        let est = e.estimate_mean_mc(17, &mut r).unwrap();
        assert_eq!(est, m);
    }

    #[test]
    fn two_point_with_p_one_is_first() {
        let e = scalar_two_point(3.0, -5.0, 1.0);
        let mut r = RngStream::new(9, 0);
        for _ in 0..1000 {
            assert_eq!(e.sample(&mut r)[(0, 0)], 3.0);
        }
    }

    #[test]
    fn two_point_mean_and_moment() {
        let a0 = OperatorMatrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        let a1 = OperatorMatrix::from_rows(&[[0.5, 0.0], [-0.5, 0.2]]).unwrap();
        let p = 0.3;
        let e = Ensemble::two_point(a0.clone(), a1.clone(), p).unwrap();
        let expected = a0.scale(p).add(&a1.scale(1.0 - p));
        assert!(e.mean().sub(&expected).max_abs() < 1e-15);
        let diff = a0.sub(&a1);
        let c = kron2(&diff, &diff).unwrap().scale(p * (1.0 - p));
        assert!(e.central_second_moment().unwrap().sub(&c).max_abs() < 1e-15);
        assert!((e.norm_bound() - op_norm(&a0).unwrap().max(op_norm(&a1).unwrap())).abs() < 1e-15);
    }

    #[test]
    fn bernoulli_variance() {
        let e = scalar_two_point(0.0, 1.0, 0.5);
        assert_eq!(e.central_second_moment().unwrap()[(0, 0)], 0.25);
    }

    #[test]
    fn diagonal_uniform_mean_and_bound() {
        let e = Ensemble::diagonal_uniform(3, -1.0, 3.0).unwrap();
        assert_eq!(e.mean(), &OperatorMatrix::identity(3));
        assert_eq!(e.norm_bound(), 3.0);
        assert!(Ensemble::diagonal_uniform(2, 1.0, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_probabilities() {
        let a = OperatorMatrix::scalar(1.0);
        assert!(Ensemble::two_point(a.clone(), a.clone(), 1.5).is_err());
        assert!(Ensemble::finite_support(vec![a.clone(), a.clone()], vec![0.5, 0.6]).is_err());
        assert!(Ensemble::finite_support(vec![a.clone()], vec![0.5, 0.5]).is_err());
        assert!(Ensemble::finite_support(
            vec![a, OperatorMatrix::identity(2)],
            vec![0.5, 0.5]
        )
        .is_err());
    }

    #[test]
    fn scalar_two_point_empirical_mean() {
        let e = scalar_two_point(0.0, 2.0, 0.5);
        let mut r = RngStream::new(2024, 0);
        let mut sum = 0.0;
        for _ in 0..1_000_000 {
            sum += e.sample(&mut r)[(0, 0)];
        }
        assert!((sum / 1e6 - 1.0).abs() < 0.01);
        let mut r = RngStream::new(2025, 0);
        let est = e.estimate_mean_mc(1_000_000, &mut r).unwrap();
        assert!((est[(0, 0)] - 1.0).abs() < 0.01);
    }

    #[test]
    fn diagonal_uniform_estimated_mean() {
        let e = Ensemble::diagonal_uniform(2, -1.0, 1.0).unwrap();
        let mut r = RngStream::new(11, 0);
        let est = e.estimate_mean_mc(1_000_000, &mut r).unwrap();
        assert!(est.max_abs() <= 0.01, "{est:?}");
    }

    #[test]
    fn mean_exp_diagonal_matches_quadrature() {
        let e = Ensemble::diagonal_uniform(1, -0.5, 2.0).unwrap();
        let t = 0.3;
        let rule = crate::linalg::gauss_legendre(32).unwrap();
        let oracle = rule.integrate(|s| ((-0.5 + 2.5 * s) * t).exp());
        assert!((e.mean_exp(t).unwrap()[(0, 0)] - oracle).abs() < 1e-14);
    }

    #[test]
    fn second_moment_form_matches_materialized() {
        let a0 = OperatorMatrix::from_rows(&[[0.2, 0.4], [-0.1, 0.0]]).unwrap();
        let a1 = OperatorMatrix::from_rows(&[[-0.3, 0.1], [0.5, 0.6]]).unwrap();
        for e in [
            Ensemble::two_point(a0, a1, 0.35).unwrap(),
            Ensemble::diagonal_uniform(2, -0.7, 0.9).unwrap(),
        ] {
            let c = e.central_second_moment().unwrap();
            let w = [0.3, -1.2];
            let u = [1.1, 0.4];
            let lhs = crate::linalg::dot(
                &crate::linalg::kron_vec(&w, &w),
                &c.apply(&crate::linalg::kron_vec(&u, &u)),
            );
            assert!((lhs - e.second_moment_form(&w, &u)).abs() < 1e-14);
        }
    }

    #[test]
    fn spec_roundtrip_through_json() {
        let spec: EnsembleSpec = serde_json::from_str(
            r#"{"family": "two_point", "first": [[0.0]], "second": [[1.0]], "p": 0.5}"#,
        )
        .unwrap();
        let e = Ensemble::from_spec(&spec).unwrap();
        assert_eq!(e.kind(), FamilyKind::TwoPoint);
        assert_eq!(e.mean()[(0, 0)], 0.5);
    }
}
