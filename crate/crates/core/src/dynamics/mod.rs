//! Sampling of the normalized product
//! `ξ_n = sqrt(n) (e^{A_1/n} ... e^{A_n/n} - e^{E A})`, its martingale
//! approximation `S_n`, and the pieces of the approximation argument.
//!
//! Products are never formed as matrices: they are applied to the probe
//! vector right to left, so a replicate costs `O(n d²)` given a
//! [`PrecomputedKernel`].

mod curves;
mod doob;
mod kernel;

pub use curves::{
    difference_check, diff_moment_curve, lemma_speed_curve, mk_moment_curve, proof_curves,
    remainder_curve, riemann_cov_sum, DiffMomentPoint, DifferenceCheck, LemmaPoint,
    MomentPoint, ProofPoint, RemainderPoint,
};
pub use doob::{doob_decomposition, DoobDecomposition, DOOB_MAX_K};
pub use kernel::{DrawPath, PrecomputedKernel};

use rayon::prelude::*;

use crate::ensembles::{Ensemble, RngStream};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, OperatorMatrix, Vector};

/// One Monte Carlo replicate of `ξ_n x` and `S_n x`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub n: usize,
    pub xi_x: Vector,
    pub s_x: Vector,
    /// `||ξ_n x - S_n x||`
    pub diff_norm: f64,
    /// `<y, ξ_n x>`
    pub projected_xi: f64,
    /// `<y, S_n x>`
    pub projected_s: f64,
}

fn check_len(dim: usize, v: &[f64]) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    Ok(())
}

fn check_kernel(e: &Ensemble, n: usize, kern: &PrecomputedKernel) -> Result<()> {
    if kern.n() != n || kern.dim() != e.dim() {
        return Err(Error::InvalidArgument(format!(
            "kernel built for (n = {}, d = {}), used with (n = {n}, d = {})",
            kern.n(),
            kern.dim(),
            e.dim()
        )));
    }
    Ok(())
}

/// `e^{A_1/n} ... e^{A_k/n} v`, applied right to left.
pub fn apply_prefix(kern: &PrecomputedKernel, path: &DrawPath, k: usize, v: &[f64]) -> Vec<f64> {
    let mut cur = v.to_vec();
    let mut next = vec![0.0; v.len()];
    for j in (1..=k).rev() {
        kern.apply_step(path, j, &cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// `S_n x = n^{-1/2} Σ_k e^{E A (k-1)/n} (A_k - E A) e^{E A (n-k)/n} x`.
pub fn apply_martingale_sum(kern: &PrecomputedKernel, path: &DrawPath, x: &[f64]) -> Vec<f64> {
    let n = kern.n();
    let d = x.len();
    let mut acc = vec![0.0; d];
    let mut tail = vec![0.0; d];
    let mut centered = vec![0.0; d];
    let mut lifted = vec![0.0; d];
    for k in 1..=n {
        kern.mean_exp_power(n - k).apply_into(x, &mut tail);
        kern.apply_centered(path, k, &tail, &mut centered);
        kern.mean_exp_power(k - 1).apply_into(&centered, &mut lifted);
        acc.iter_mut().zip(&lifted).for_each(|(a, l)| *a += l);
    }
    let scale = 1.0 / (n as f64).sqrt();
    acc.iter_mut().for_each(|a| *a *= scale);
    acc
}

/// `ξ_n x = sqrt(n) (e^{A_1/n} ... e^{A_n/n} x - e^{E A} x)`.
pub fn apply_xi(kern: &PrecomputedKernel, path: &DrawPath, x: &[f64]) -> Vec<f64> {
    let n = kern.n();
    let root_n = (n as f64).sqrt();
    let product = apply_prefix(kern, path, n, x);
    let target = kern.mean_exp_power(n).apply(x);
    product
        .iter()
        .zip(target.iter())
        .map(|(p, t)| root_n * (p - t))
        .collect()
}

/// Computes `ξ_n x` and `S_n x` for a given path of draws.
pub fn trajectory_from_path(
    kern: &PrecomputedKernel,
    path: &DrawPath,
    x: &[f64],
    y: &[f64],
) -> TrajectorySample {
    let n = kern.n();
    let xi = apply_xi(kern, path, x);
    let s = apply_martingale_sum(kern, path, x);
    let diff: Vec<f64> = xi.iter().zip(&s).map(|(a, b)| a - b).collect();
    TrajectorySample {
        n,
        projected_xi: dot(y, &xi),
        projected_s: dot(y, &s),
        diff_norm: norm2(&diff),
        xi_x: Vector::new(xi).expect("finite"),
        s_x: Vector::new(s).expect("finite"),
    }
}

/// `ξ_n x` alone for `reps` replicates, with the same streams and ordering
/// as [`sample_projected_xi`].
pub fn sample_xi_vectors(
    e: &Ensemble,
    kern: &PrecomputedKernel,
    x: &[f64],
    reps: usize,
    seed: u64,
    tag: &str,
) -> Result<Vec<Vec<f64>>> {
    check_len(e.dim(), x)?;
    let n = kern.n();
    Ok((0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::derive(seed, tag, n as u64, r);
            let path = DrawPath::sample(e, n, &mut rng);
            apply_xi(kern, &path, x)
        })
        .collect())
}

/// Draws `A_1, ..., A_n` from `rng` and returns one trajectory sample.
pub fn sample_xi(
    e: &Ensemble,
    n: usize,
    x: &[f64],
    y: &[f64],
    rng: &mut RngStream,
    kern: &PrecomputedKernel,
) -> Result<TrajectorySample> {
    check_kernel(e, n, kern)?;
    check_len(e.dim(), x)?;
    check_len(e.dim(), y)?;
    let path = DrawPath::sample(e, n, rng);
    Ok(trajectory_from_path(kern, &path, x, y))
}

/// `<y, ξ_n x>` for `reps` replicates; replicate `r` uses the stream derived
/// from `(seed, tag, n, r)`. Output order is replicate order regardless of
/// how the work is scheduled.
pub fn sample_projected_xi(
    e: &Ensemble,
    kern: &PrecomputedKernel,
    x: &[f64],
    y: &[f64],
    reps: usize,
    seed: u64,
    tag: &str,
) -> Result<Vec<TrajectorySample>> {
    check_len(e.dim(), x)?;
    check_len(e.dim(), y)?;
    let n = kern.n();
    Ok((0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::derive(seed, tag, n as u64, r);
            let path = DrawPath::sample(e, n, &mut rng);
            trajectory_from_path(kern, &path, x, y)
        })
        .collect())
}

/// `d_{n,k} = n^{-1/2} e^{E A (k-1)/n} (A_k - E A) e^{E A (n-k)/n}`.
pub fn martingale_difference(
    e: &Ensemble,
    n: usize,
    k: usize,
    a_k: &OperatorMatrix,
    kern: &PrecomputedKernel,
) -> Result<OperatorMatrix> {
    check_kernel(e, n, kern)?;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={n}")));
    }
    if a_k.dim() != e.dim() {
        return Err(Error::DimensionMismatch {
            expected: e.dim(),
            got: a_k.dim(),
        });
    }
    Ok(kern
        .mean_exp_power(k - 1)
        .matmul(&a_k.sub(e.mean()))
        .matmul(kern.mean_exp_power(n - k))
        .scale(1.0 / (n as f64).sqrt()))
}

/// `ξ_n' x` two ways plus `S_n' x` and the Taylor remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct XiPrimeDecomposition {
    /// `sqrt(n) (e^{A_1/n} ... e^{A_n/n} - (E e^{A/n})^n) x`, computed directly.
    pub xi_prime_x: Vec<f64>,
    /// The same quantity from the telescoping sum.
    pub xi_prime_telescoped: Vec<f64>,
    /// `S_n' x = n^{-1/2} Σ_k e^{A_1/n}...e^{A_{k-1}/n} (A_k - E A) (E e^{A/n})^{n-k} x`.
    pub s_prime_x: Vec<f64>,
    /// `||ξ_n' x - S_n' x||`
    pub r_norm: f64,
}

/// `(E e^{A/n})^j x` for `j = 0..=n`.
fn mean_step_orbit(kern: &PrecomputedKernel, x: &[f64]) -> Vec<Vec<f64>> {
    let n = kern.n();
    let mut orbit = Vec::with_capacity(n + 1);
    orbit.push(x.to_vec());
    for j in 1..=n {
        let next = kern.mean_step().apply(&orbit[j - 1]).into_inner();
        orbit.push(next);
    }
    orbit
}

/// `ξ_n' x` (direct) and `S_n' x`, sharing one right-to-left sweep.
fn xi_prime_and_s_prime(
    kern: &PrecomputedKernel,
    path: &DrawPath,
    x: &[f64],
    orbit: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>) {
    let n = kern.n();
    let d = x.len();
    let root_n = (n as f64).sqrt();
    // Horner form: U_k = (A_k - E A) q_{n-k} + e^{A_k/n} U_{k+1}, S_n' x = U_1 / sqrt(n)
    let mut u = vec![0.0; d];
    let mut stepped = vec![0.0; d];
    let mut centered = vec![0.0; d];
    let mut product = x.to_vec();
    let mut product_next = vec![0.0; d];
    for k in (1..=n).rev() {
        kern.apply_step(path, k, &u, &mut stepped);
        kern.apply_centered(path, k, &orbit[n - k], &mut centered);
        for i in 0..d {
            u[i] = stepped[i] + centered[i];
        }
        kern.apply_step(path, k, &product, &mut product_next);
        std::mem::swap(&mut product, &mut product_next);
    }
    let xi_prime = product
        .iter()
        .zip(&orbit[n])
        .map(|(p, q)| root_n * (p - q))
        .collect();
    let s_prime = u.iter().map(|v| v / root_n).collect();
    (xi_prime, s_prime)
}

fn telescoped_xi_prime(
    kern: &PrecomputedKernel,
    path: &DrawPath,
    x: &[f64],
    orbit: &[Vec<f64>],
) -> Vec<f64> {
    let n = kern.n();
    let d = x.len();
    let mut t = vec![0.0; d];
    let mut stepped = vec![0.0; d];
    let mut jump = vec![0.0; d];
    for k in (1..=n).rev() {
        kern.apply_step(path, k, &t, &mut stepped);
        let q = &orbit[n - k];
        kern.apply_step(path, k, q, &mut jump);
        let mean_part = &orbit[n - k + 1];
        for i in 0..d {
            t[i] = stepped[i] + (jump[i] - mean_part[i]);
        }
    }
    let root_n = (n as f64).sqrt();
    t.into_iter().map(|v| root_n * v).collect()
}

fn decompose_path(kern: &PrecomputedKernel, path: &DrawPath, x: &[f64]) -> XiPrimeDecomposition {
    let orbit = mean_step_orbit(kern, x);
    let (xi_prime_x, s_prime_x) = xi_prime_and_s_prime(kern, path, x, &orbit);
    let xi_prime_telescoped = telescoped_xi_prime(kern, path, x, &orbit);
    let r: Vec<f64> = xi_prime_x
        .iter()
        .zip(&s_prime_x)
        .map(|(a, b)| a - b)
        .collect();
    XiPrimeDecomposition {
        r_norm: norm2(&r),
        xi_prime_x,
        xi_prime_telescoped,
        s_prime_x,
    }
}

/// Splits `ξ_n' x` into the linearized sum `S_n' x` and the remainder `R_n x`.
pub fn decompose_xi_prime(
    e: &Ensemble,
    n: usize,
    draws: &[OperatorMatrix],
    x: &[f64],
    kern: &PrecomputedKernel,
) -> Result<XiPrimeDecomposition> {
    check_kernel(e, n, kern)?;
    check_len(e.dim(), x)?;
    if draws.len() != n {
        return Err(Error::InvalidArgument(format!(
            "expected {n} draws, got {}",
            draws.len()
        )));
    }
    let path = DrawPath::from_matrices(draws.to_vec(), n)?;
    Ok(decompose_path(kern, &path, x))
}

/// Per-replicate quantities behind the rate bounds of the approximation
/// argument.
#[derive(Debug, Clone, PartialEq)]
pub struct ProofReplicate {
    /// `||R_n x||`
    pub r_norm: f64,
    /// `||M_n||` with `M_n = e^{A_1/n}...e^{A_n/n} x - (E e^{A/n})^n x`
    pub m_norm: f64,
    /// `||ξ_n x - S_n x||`
    pub xi_minus_s: f64,
    /// `d_{n,k} x - d'_{n,k} x` for each requested `k`.
    pub deltas: Vec<Vec<f64>>,
}

/// `d_{n,k} x - d'_{n,k} x`, where `d'_{n,k}` replaces the deterministic
/// factors of `d_{n,k}` by the random prefix and the mean-step power.
pub fn approximation_delta(
    kern: &PrecomputedKernel,
    path: &DrawPath,
    x: &[f64],
    k: usize,
) -> Vec<f64> {
    let n = kern.n();
    let d = x.len();
    let mut centered = vec![0.0; d];
    let tail = kern.mean_exp_power(n - k).apply(x);
    kern.apply_centered(path, k, &tail, &mut centered);
    let exact = kern.mean_exp_power(k - 1).apply(&centered);

    let tail_prime = kern.mean_step_power(n - k).apply(x);
    kern.apply_centered(path, k, &tail_prime, &mut centered);
    let approx = apply_prefix(kern, path, k - 1, &centered);

    let scale = 1.0 / (n as f64).sqrt();
    exact
        .iter()
        .zip(&approx)
        .map(|(a, b)| scale * (a - b))
        .collect()
}

/// All per-replicate diagnostics in one pass over a path.
pub fn proof_replicate(
    kern: &PrecomputedKernel,
    path: &DrawPath,
    x: &[f64],
    ks: &[usize],
) -> ProofReplicate {
    let n = kern.n();
    let orbit = mean_step_orbit(kern, x);
    let (xi_prime, s_prime) = xi_prime_and_s_prime(kern, path, x, &orbit);
    let r: Vec<f64> = xi_prime.iter().zip(&s_prime).map(|(a, b)| a - b).collect();
    let root_n = (n as f64).sqrt();
    let m_norm = norm2(&xi_prime) / root_n;

    // ξ_n x = ξ_n' x + sqrt(n) ((E e^{A/n})^n - e^{E A}) x
    let target = kern.mean_exp_power(n).apply(x);
    let s = apply_martingale_sum(kern, path, x);
    let xi_minus_s: Vec<f64> = (0..x.len())
        .map(|i| xi_prime[i] + root_n * (orbit[n][i] - target[i]) - s[i])
        .collect();

    ProofReplicate {
        r_norm: norm2(&r),
        m_norm,
        xi_minus_s: norm2(&xi_minus_s),
        deltas: ks
            .iter()
            .map(|&k| approximation_delta(kern, path, x, k))
            .collect(),
    }
}

/// The `k` values used for the uniform-in-`k` checks: `1`, `ceil(n/2)`, `n`.
pub fn probe_ks(n: usize) -> Vec<usize> {
    let mut ks = vec![1, n.div_ceil(2), n];
    ks.dedup();
    ks
}
