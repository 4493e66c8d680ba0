//! Gauss–Legendre rules on `[0, 1]` and the node-doubling integrator used for
//! the covariance integral.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 512;
pub const ADAPTIVE_START: usize = 8;
pub const ADAPTIVE_CAP: usize = 256;
pub const ADAPTIVE_RTOL: f64 = 1e-12;

/// A quadrature rule normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| w * f(s))
            .collect();
        pairwise_sum(&terms)
    }
}

/// Legendre polynomial `P_m(x)` and its derivative.
fn legendre(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let m = m as f64;
    let dp = m * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// The `m`-node Gauss–Legendre rule mapped to `[0, 1]`.
pub fn gauss_legendre(m: usize) -> Result<QuadratureRule> {
    if !(1..=MAX_ORDER).contains(&m) {
        return Err(Error::QuadratureOrder(m));
    }
    if m == 1 {
        return Ok(QuadratureRule {
            nodes: vec![0.5],
            weights: vec![1.0],
        });
    }
    // Roots on [-1, 1] come in +/- pairs; solve for the positive half with
    // Newton iteration and mirror.
    let half = m.div_ceil(2);
    let mut pos = Vec::with_capacity(half);
    for i in 0..half {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(m, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        pos.push((x, w));
    }
    if m % 2 == 1 {
        // middle root is exactly zero
        let last = pos.last_mut().expect("nonempty");
        last.0 = 0.0;
        let (_, dp) = legendre(m, 0.0);
        last.1 = 2.0 / (dp * dp);
    }

    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    // pos is ordered by decreasing x; emit negatives first.
    for &(x, w) in &pos {
        if x == 0.0 {
            continue;
        }
        nodes.push(0.5 * (1.0 - x));
        weights.push(0.5 * w);
    }
    for &(x, w) in pos.iter().rev() {
        nodes.push(0.5 * (1.0 + x));
        weights.push(0.5 * w);
    }
    debug_assert_eq!(nodes.len(), m);
    Ok(QuadratureRule { nodes, weights })
}

/// Summation by recursive halving, in fixed order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (l, r) = values.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

/// Result of a node-doubling integration.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveIntegral<T> {
    pub value: T,
    pub nodes: usize,
    pub converged: bool,
    /// Relative change between the final two levels.
    pub last_change: f64,
}

/// Integrates a vector-valued `f` over `[0, 1]`, doubling the node count from
/// `ADAPTIVE_START` until the Euclidean norm of the change is below
/// `ADAPTIVE_RTOL` relative to the current value, capped at `ADAPTIVE_CAP`.
pub fn integrate_adaptive_vec(f: impl Fn(f64) -> Vec<f64>) -> AdaptiveIntegral<Vec<f64>> {
    let eval = |m: usize| -> Vec<f64> {
        let rule = gauss_legendre(m).expect("order in range");
        let mut acc: Option<Vec<f64>> = None;
        for (&s, &w) in rule.nodes().iter().zip(rule.weights()) {
            let v = f(s);
            match acc.as_mut() {
                None => acc = Some(v.into_iter().map(|x| w * x).collect()),
                Some(a) => a.iter_mut().zip(v).for_each(|(a, x)| *a += w * x),
            }
        }
        acc.unwrap_or_default()
    };
    let mut m = ADAPTIVE_START;
    let mut prev = eval(m);
    loop {
        let next_m = m * 2;
        let next = eval(next_m);
        let diff = next
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = next.iter().map(|a| a * a).sum::<f64>().sqrt();
        let change = if diff == 0.0 { 0.0 } else { diff / scale };
        if change < ADAPTIVE_RTOL || next_m >= ADAPTIVE_CAP {
            return AdaptiveIntegral {
                value: next,
                nodes: next_m,
                converged: change < ADAPTIVE_RTOL,
                last_change: change,
            };
        }
        m = next_m;
        prev = next;
    }
}

/// Scalar counterpart of [`integrate_adaptive_vec`].
pub fn integrate_adaptive(f: impl Fn(f64) -> f64) -> AdaptiveIntegral<f64> {
    let mut m = ADAPTIVE_START;
    let mut prev = gauss_legendre(m).expect("order in range").integrate(&f);
    loop {
        let next_m = m * 2;
        let next = gauss_legendre(next_m).expect("order in range").integrate(&f);
        let diff = (next - prev).abs();
        let change = if diff == 0.0 { 0.0 } else { diff / next.abs() };
        if change < ADAPTIVE_RTOL || next_m >= ADAPTIVE_CAP {
            return AdaptiveIntegral {
                value: next,
                nodes: next_m,
                converged: change < ADAPTIVE_RTOL,
                last_change: change,
            };
        }
        m = next_m;
        prev = next;
    }
}
