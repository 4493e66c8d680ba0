//! Rate curves over an `n`-grid.

use rayon::prelude::*;

use super::kernel::{DrawPath, PrecomputedKernel};
use super::{martingale_difference, probe_ks, proof_replicate};
use crate::ensembles::{Ensemble, RngStream};
use crate::error::{Error, Result};
use crate::linalg::{dot, mat_exp, op_norm, OperatorMatrix};

fn check_grid(grid: &[usize]) -> Result<()> {
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "n-grid must be strictly increasing positive integers, got {grid:?}"
        )));
    }
    Ok(())
}

/// One grid point of the exact speed curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaPoint {
    pub n: usize,
    /// `||(E e^{A/n})^n - e^{E A}||`
    pub outer: f64,
    /// `||E e^{A/n} - e^{E A/n}||`
    pub inner: f64,
    /// `max_k ||(E e^{A/n})^k - e^{E A k/n}||` over `k ∈ {1, ceil(n/2), n}`
    pub k_max: f64,
}

/// Exact (quadrature-free) distances between the mean-step powers and the
/// exponential of the mean.
pub fn lemma_speed_curve(e: &Ensemble, grid: &[usize]) -> Result<Vec<LemmaPoint>> {
    check_grid(grid)?;
    grid.iter()
        .map(|&n| {
            let inv_n = 1.0 / n as f64;
            let step = e.mean_exp(inv_n)?;
            let mean_step_exp = mat_exp(&e.mean().scale(inv_n))?;
            let inner = op_norm(&step.sub(&mean_step_exp))?;
            let mut k_max = 0.0f64;
            let mut outer = 0.0;
            for k in probe_ks(n) {
                // e^{E A k/n} = (e^{E A/n})^k; both sides use the same powering
                // so the zero-variance case is exactly zero.
                let dist = op_norm(
                    &step
                        .powi(k as u64)
                        .sub(&mean_step_exp.powi(k as u64)),
                )?;
                k_max = k_max.max(dist);
                if k == n {
                    outer = dist;
                }
            }
            Ok(LemmaPoint {
                n,
                outer,
                inner,
                k_max,
            })
        })
        .collect()
}

/// Deterministic Riemann sum
/// `(1/n) Σ_k <y^{⊗2}, (e^{E A (k-1)/n})^{⊗2} C (e^{E A (n-k)/n})^{⊗2} x^{⊗2}>`
/// of the conditional covariances of the martingale differences.
pub fn riemann_cov_sum(e: &Ensemble, kern: &PrecomputedKernel, x: &[f64], y: &[f64]) -> f64 {
    let n = kern.n();
    let terms: Vec<f64> = (1..=n)
        .map(|k| {
            let w = kern.mean_exp_power(k - 1).apply_transpose(y);
            let u = kern.mean_exp_power(n - k).apply(x);
            e.second_moment_form(&w, &u)
        })
        .collect();
    crate::linalg::quadrature::pairwise_sum(&terms) / n as f64
}

/// Monte Carlo estimate of `E <Δ_k, Δ_l>` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossMoment {
    pub k: usize,
    pub l: usize,
    pub mean: f64,
    pub std_error: f64,
}

/// All Monte Carlo statistics of the approximation argument at one `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProofPoint {
    pub n: usize,
    pub replicates: usize,
    pub median_r_norm: f64,
    pub mean_r_norm: f64,
    pub mean_m_norm: f64,
    pub mean_m_norm_sq: f64,
    /// Average over the probed `k` of the mean `||d_{n,k} x - d'_{n,k} x||²`.
    pub mean_diff_sq: f64,
    pub per_k_diff_sq: Vec<(usize, f64)>,
    pub cross_moments: Vec<CrossMoment>,
    /// Empirical 0.9-quantile of `||ξ_n x - S_n x||`.
    pub xi_minus_s_q90: f64,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = mean(values);
    let n = values.len() as f64;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

/// Stream tag shared by the approximation-rate curves.
pub const PROOF_TAG: &str = "martingale";

/// Runs `reps` replicates at every grid point and reduces them in replicate
/// order.
pub fn proof_curves(
    e: &Ensemble,
    grid: &[usize],
    x: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<ProofPoint>> {
    check_grid(grid)?;
    if reps < 2 {
        return Err(Error::InvalidArgument("need at least 2 replicates".into()));
    }
    if x.len() != e.dim() {
        return Err(Error::DimensionMismatch {
            expected: e.dim(),
            got: x.len(),
        });
    }
    grid.iter()
        .map(|&n| {
            let kern = PrecomputedKernel::new(e, n)?;
            let ks = probe_ks(n);
            let results: Vec<_> = (0..reps as u64)
                .into_par_iter()
                .map(|r| {
                    let mut rng = RngStream::derive(seed, PROOF_TAG, n as u64, r);
                    let path = DrawPath::sample(e, n, &mut rng);
                    proof_replicate(&kern, &path, x, &ks)
                })
                .collect();
            let r_norms: Vec<f64> = results.iter().map(|p| p.r_norm).collect();
            let m_norms: Vec<f64> = results.iter().map(|p| p.m_norm).collect();
            let m_sq: Vec<f64> = m_norms.iter().map(|m| m * m).collect();
            let gaps: Vec<f64> = results.iter().map(|p| p.xi_minus_s).collect();
            let per_k_diff_sq: Vec<(usize, f64)> = ks
                .iter()
                .enumerate()
                .map(|(i, &k)| {
                    let sq: Vec<f64> = results
                        .iter()
                        .map(|p| dot(&p.deltas[i], &p.deltas[i]))
                        .collect();
                    (k, mean(&sq))
                })
                .collect();
            let mut cross_moments = Vec::new();
            for i in 0..ks.len() {
                for j in i + 1..ks.len() {
                    let prods: Vec<f64> = results
                        .iter()
                        .map(|p| dot(&p.deltas[i], &p.deltas[j]))
                        .collect();
                    let (m, se) = mean_and_se(&prods);
                    cross_moments.push(CrossMoment {
                        k: ks[i],
                        l: ks[j],
                        mean: m,
                        std_error: se,
                    });
                }
            }
            Ok(ProofPoint {
                n,
                replicates: reps,
                median_r_norm: quantile(&r_norms, 0.5),
                mean_r_norm: mean(&r_norms),
                mean_m_norm: mean(&m_norms),
                mean_m_norm_sq: mean(&m_sq),
                mean_diff_sq: mean(&per_k_diff_sq.iter().map(|p| p.1).collect::<Vec<_>>()),
                per_k_diff_sq,
                cross_moments,
                xi_minus_s_q90: quantile(&gaps, 0.9),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentPoint {
    pub n: usize,
    pub mean_norm: f64,
    pub mean_norm_sq: f64,
}

/// Mean `||M_n||` and `||M_n||²` over the grid.
pub fn mk_moment_curve(
    e: &Ensemble,
    grid: &[usize],
    x: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<MomentPoint>> {
    if reps < 100 {
        return Err(Error::InvalidArgument("need at least 100 replicates".into()));
    }
    Ok(proof_curves(e, grid, x, reps, seed)?
        .into_iter()
        .map(|p| MomentPoint {
            n: p.n,
            mean_norm: p.mean_m_norm,
            mean_norm_sq: p.mean_m_norm_sq,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffMomentPoint {
    pub n: usize,
    pub mean_diff_sq: f64,
    pub per_k: Vec<(usize, f64)>,
    pub cross_moments: Vec<CrossMoment>,
}

/// Mean `||d_{n,k} x - d'_{n,k} x||²` over the grid, for `k ∈ {1, ceil(n/2), n}`.
pub fn diff_moment_curve(
    e: &Ensemble,
    grid: &[usize],
    x: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<DiffMomentPoint>> {
    if reps < 100 {
        return Err(Error::InvalidArgument("need at least 100 replicates".into()));
    }
    Ok(proof_curves(e, grid, x, reps, seed)?
        .into_iter()
        .map(|p| DiffMomentPoint {
            n: p.n,
            mean_diff_sq: p.mean_diff_sq,
            per_k: p.per_k_diff_sq,
            cross_moments: p.cross_moments,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderPoint {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
}

/// Median and mean `||R_n x||` over the grid.
pub fn remainder_curve(
    e: &Ensemble,
    grid: &[usize],
    x: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<RemainderPoint>> {
    Ok(proof_curves(e, grid, x, reps, seed)?
        .into_iter()
        .map(|p| RemainderPoint {
            n: p.n,
            median: p.median_r_norm,
            mean: p.mean_r_norm,
        })
        .collect())
}

/// Mean of `d_{n,k}` over independent draws of `A_k`, in Frobenius norm,
/// with the Frobenius standard error of that mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanZeroTest {
    pub k: usize,
    pub mean_norm: f64,
    pub std_error: f64,
}

/// Norm bounds and conditional-Lindeberg events of the martingale differences.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceCheck {
    pub n: usize,
    pub draws_checked: usize,
    pub max_norm: f64,
    /// `(2ρ / sqrt(n)) e^{ρ (n-1)/n}`
    pub bound: f64,
    /// `(2ρ / sqrt(n)) e^{ρ}`
    pub uniform_bound: f64,
    /// Draws with `||d_{n,k}||` above `bound` (beyond rounding).
    pub violations: usize,
    /// Draws with `||d_{n,k}|| > ε`.
    pub lindeberg_events: usize,
    pub mean_tests: Vec<MeanZeroTest>,
}

/// Tag for the martingale-difference streams.
pub const DIFFERENCE_TAG: &str = "martingale-difference";

/// Checks every `d_{n,k}` of `path_reps` full paths against the norm bounds and
/// the threshold `eps`, and tests `E d_{n,k} = 0` at `k ∈ {1, ceil(n/2), n}`
/// with `mean_reps` independent draws each.
pub fn difference_check(
    e: &Ensemble,
    kern: &PrecomputedKernel,
    path_reps: usize,
    mean_reps: usize,
    eps: f64,
    seed: u64,
) -> Result<DifferenceCheck> {
    let n = kern.n();
    let rho = e.norm_bound();
    let root_n = (n as f64).sqrt();
    let bound = 2.0 * rho / root_n * (rho * (n as f64 - 1.0) / n as f64).exp();
    let uniform_bound = 2.0 * rho / root_n * rho.exp();
    let slack = bound * (1.0 + 1e-12);

    // For finite supports ||d_{n,k}|| depends only on (k, atom): tabulate.
    let table: Option<Vec<Vec<f64>>> = match e.atoms() {
        Some((atoms, _)) => Some(
            (1..=n)
                .map(|k| {
                    atoms
                        .iter()
                        .map(|a| op_norm(&martingale_difference(e, n, k, a, kern)?))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?,
        ),
        None => None,
    };

    let per_path: Vec<(f64, usize, usize)> = (0..path_reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::derive(seed, DIFFERENCE_TAG, n as u64, r);
            let path = DrawPath::sample(e, n, &mut rng);
            let mut max_norm = 0.0f64;
            let mut violations = 0;
            let mut events = 0;
            for k in 1..=n {
                let norm = match (&table, &path) {
                    (Some(t), DrawPath::Atoms(idx)) => t[k - 1][idx[k - 1]],
                    _ => {
                        let d = martingale_difference(e, n, k, &path.matrix(e, k), kern)
                            .expect("valid kernel");
                        op_norm(&d).expect("finite")
                    }
                };
                max_norm = max_norm.max(norm);
                if norm > slack {
                    violations += 1;
                }
                if norm > eps {
                    events += 1;
                }
            }
            (max_norm, violations, events)
        })
        .collect();

    let mut mean_tests = Vec::new();
    for k in probe_ks(n) {
        let draws: Vec<OperatorMatrix> = (0..mean_reps as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = RngStream::derive(seed ^ k as u64, "difference-mean", n as u64, r);
                let a = e.sample(&mut rng);
                martingale_difference(e, n, k, &a, kern).expect("valid kernel")
            })
            .collect();
        let dd = e.dim() * e.dim();
        let mut sum = vec![0.0; dd];
        for d in &draws {
            sum.iter_mut().zip(d.as_slice()).for_each(|(s, v)| *s += v);
        }
        let m: Vec<f64> = sum.iter().map(|s| s / mean_reps as f64).collect();
        let mut var_total = 0.0;
        for d in &draws {
            var_total += d
                .as_slice()
                .iter()
                .zip(&m)
                .map(|(v, mu)| (v - mu) * (v - mu))
                .sum::<f64>();
        }
        let var_total = var_total / (mean_reps as f64 - 1.0).max(1.0);
        mean_tests.push(MeanZeroTest {
            k,
            mean_norm: m.iter().map(|v| v * v).sum::<f64>().sqrt(),
            std_error: (var_total / mean_reps as f64).sqrt(),
        });
    }

    Ok(DifferenceCheck {
        n,
        draws_checked: path_reps * n,
        max_norm: per_path.iter().map(|p| p.0).fold(0.0, f64::max),
        bound,
        uniform_bound,
        violations: per_path.iter().map(|p| p.1).sum(),
        lindeberg_events: per_path.iter().map(|p| p.2).sum(),
        mean_tests,
    })
}
