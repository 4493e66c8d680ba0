use crate::ensembles::{Draw, Ensemble, RngStream};
use crate::error::{Error, Result};
use crate::linalg::{mat_exp, OperatorMatrix};

/// The draws `A_1, ..., A_n` of one replicate, stored compactly.
#[derive(Debug, Clone, PartialEq)]
pub enum DrawPath {
    Atoms(Vec<usize>),
    Diagonals { dim: usize, values: Vec<f64> },
    /// Arbitrary draws with their step exponentials `e^{A_k/n}`.
    Dense {
        draws: Vec<OperatorMatrix>,
        steps: Vec<OperatorMatrix>,
    },
}

impl DrawPath {
    /// Draws `n` operators from `rng` in order `A_1, ..., A_n`.
    pub fn sample(e: &Ensemble, n: usize, rng: &mut RngStream) -> Self {
        if e.atoms().is_some() {
            let idx = (0..n)
                .map(|_| match e.draw(rng) {
                    Draw::Atom(i) => i,
                    Draw::Diagonal(_) => unreachable!("finite family"),
                })
                .collect();
            DrawPath::Atoms(idx)
        } else {
            let mut values = Vec::with_capacity(n * e.dim());
            for _ in 0..n {
                match e.draw(rng) {
                    Draw::Diagonal(v) => values.extend_from_slice(&v),
                    Draw::Atom(_) => unreachable!("continuous family"),
                }
            }
            DrawPath::Diagonals {
                dim: e.dim(),
                values,
            }
        }
    }

    /// Wraps explicit draws for composition length `n`.
    pub fn from_matrices(draws: Vec<OperatorMatrix>, n: usize) -> Result<Self> {
        let inv_n = 1.0 / n as f64;
        let steps = draws
            .iter()
            .map(|a| mat_exp(&a.scale(inv_n)))
            .collect::<Result<Vec<_>>>()?;
        Ok(DrawPath::Dense { draws, steps })
    }

    pub fn len(&self) -> usize {
        match self {
            DrawPath::Atoms(v) => v.len(),
            DrawPath::Diagonals { dim, values } => values.len() / dim,
            DrawPath::Dense { draws, .. } => draws.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `k`-th draw (1-based), materialized.
    pub fn matrix(&self, e: &Ensemble, k: usize) -> OperatorMatrix {
        match self {
            DrawPath::Atoms(v) => e.atoms().expect("finite family").0[v[k - 1]].clone(),
            DrawPath::Diagonals { dim, values } => {
                OperatorMatrix::from_diag(&values[(k - 1) * dim..k * dim]).expect("finite draw")
            }
            DrawPath::Dense { draws, .. } => draws[k - 1].clone(),
        }
    }
}

/// Everything about `(ensemble, n)` that does not depend on the draws.
///
/// For finite supports the per-step exponentials `e^{A^i/n}` are tabulated so
/// a replicate reduces to table lookups and matrix-vector products.
#[derive(Debug, Clone)]
pub struct PrecomputedKernel {
    n: usize,
    dim: usize,
    rho: f64,
    mean: OperatorMatrix,
    step_exps: Vec<OperatorMatrix>,
    centered_atoms: Vec<OperatorMatrix>,
    /// `e^{E A k/n}` for `k = 0..=n`.
    mean_exp_powers: Vec<OperatorMatrix>,
    /// `E e^{A/n}`.
    mean_step: OperatorMatrix,
    /// `(E e^{A/n})^k` for `k = 0..=n`.
    mean_step_powers: Vec<OperatorMatrix>,
}

impl PrecomputedKernel {
    pub fn new(e: &Ensemble, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        let inv_n = 1.0 / n as f64;
        let mean = e.mean().clone();
        let (step_exps, centered_atoms) = match e.atoms() {
            Some((atoms, _)) => (
                atoms
                    .iter()
                    .map(|a| mat_exp(&a.scale(inv_n)))
                    .collect::<Result<Vec<_>>>()?,
                atoms.iter().map(|a| a.sub(&mean)).collect(),
            ),
            None => (Vec::new(), Vec::new()),
        };
        let mean_exp_powers = (0..=n)
            .map(|k| mat_exp(&mean.scale(k as f64 * inv_n)))
            .collect::<Result<Vec<_>>>()?;
        let mean_step = e.mean_exp(inv_n)?;
        let mut mean_step_powers = Vec::with_capacity(n + 1);
        mean_step_powers.push(OperatorMatrix::identity(e.dim()));
        for k in 1..=n {
            let next = mean_step_powers[k - 1].matmul(&mean_step);
            mean_step_powers.push(next);
        }
        Ok(PrecomputedKernel {
            n,
            dim: e.dim(),
            rho: e.norm_bound(),
            mean,
            step_exps,
            centered_atoms,
            mean_exp_powers,
            mean_step,
            mean_step_powers,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_bound(&self) -> f64 {
        self.rho
    }

    pub fn mean(&self) -> &OperatorMatrix {
        &self.mean
    }

    /// `e^{E A k/n}`.
    pub fn mean_exp_power(&self, k: usize) -> &OperatorMatrix {
        &self.mean_exp_powers[k]
    }

    /// `E e^{A/n}`.
    pub fn mean_step(&self) -> &OperatorMatrix {
        &self.mean_step
    }

    /// `(E e^{A/n})^k`.
    pub fn mean_step_power(&self, k: usize) -> &OperatorMatrix {
        &self.mean_step_powers[k]
    }

    /// Tabulated `e^{A^i/n}` (empty for continuous families).
    pub fn step_exps(&self) -> &[OperatorMatrix] {
        &self.step_exps
    }

    /// `out = e^{A_k/n} v`.
    #[inline]
    pub fn apply_step(&self, path: &DrawPath, k: usize, v: &[f64], out: &mut [f64]) {
        match path {
            DrawPath::Atoms(idx) => self.step_exps[idx[k - 1]].apply_into(v, out),
            DrawPath::Diagonals { dim, values } => {
                let inv_n = 1.0 / self.n as f64;
                let diag = &values[(k - 1) * dim..k * dim];
                for ((o, &a), &x) in out.iter_mut().zip(diag).zip(v) {
                    *o = (a * inv_n).exp() * x;
                }
            }
            DrawPath::Dense { steps, .. } => steps[k - 1].apply_into(v, out),
        }
    }

    /// `out = (A_k - E A) v`.
    #[inline]
    pub fn apply_centered(&self, path: &DrawPath, k: usize, v: &[f64], out: &mut [f64]) {
        match path {
            DrawPath::Atoms(idx) => self.centered_atoms[idx[k - 1]].apply_into(v, out),
            DrawPath::Diagonals { dim, values } => {
                let diag = &values[(k - 1) * dim..k * dim];
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (diag[i] - self.mean[(i, i)]) * v[i];
                }
            }
            DrawPath::Dense { draws, .. } => {
                draws[k - 1].apply_into(v, out);
                let shift = self.mean.apply(v);
                out.iter_mut().zip(shift.iter()).for_each(|(o, s)| *o -= s);
            }
        }
    }

    /// `e^{A_k/n}` as a matrix.
    pub fn step_matrix(&self, path: &DrawPath, k: usize) -> OperatorMatrix {
        match path {
            DrawPath::Atoms(idx) => self.step_exps[idx[k - 1]].clone(),
            DrawPath::Diagonals { dim, values } => {
                let inv_n = 1.0 / self.n as f64;
                let diag: Vec<f64> = values[(k - 1) * dim..k * dim]
                    .iter()
                    .map(|a| (a * inv_n).exp())
                    .collect();
                OperatorMatrix::from_diag(&diag).expect("finite draw")
            }
            DrawPath::Dense { steps, .. } => steps[k - 1].clone(),
        }
    }
}
