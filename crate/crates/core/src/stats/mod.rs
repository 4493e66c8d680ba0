//! Goodness-of-fit and rate estimation.

use serde::Serialize;

use crate::error::{Error, Result};

/// Asymptotic Kolmogorov critical value `c(α)` at `α = 0.01`.
pub const KS_CRITICAL_01: f64 = 1.628;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// One-sample Kolmogorov–Smirnov test against `N(0, sigma2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub distance: f64,
    /// `c(0.01) / sqrt(count)`
    pub threshold_at_alpha: f64,
}

impl KsResult {
    pub fn passes(&self) -> bool {
        self.distance < self.threshold_at_alpha
    }
}

pub fn ks_test(samples: &[f64], sigma2: f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("KS test needs samples".into()));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "KS reference variance must be positive, got {sigma2}"
        )));
    }
    let sigma = sigma2.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let count = sorted.len() as f64;
    let mut distance = 0.0f64;
    for (i, &v) in sorted.iter().enumerate() {
        let f = normal_cdf(v / sigma);
        let below = i as f64 / count;
        let above = (i + 1) as f64 / count;
        distance = distance.max((f - below).abs()).max((above - f).abs());
    }
    Ok(KsResult {
        distance: distance.min(1.0),
        threshold_at_alpha: KS_CRITICAL_01 / count.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleStatistics {
    pub count: usize,
    pub mean: f64,
    /// Unbiased.
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// KS distance against `N(0, sigma2_ref)`; `None` when `sigma2_ref = 0`.
    pub ks_distance: Option<f64>,
    pub min: f64,
    pub max: f64,
}

/// One-pass moments (Terriberry's update of the central moments) and the KS
/// distance against `N(0, sigma2_ref)`.
pub fn summarize(samples: &[f64], sigma2_ref: f64) -> Result<SampleStatistics> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    let (mut n, mut mean, mut m2, mut m3, mut m4) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &x in samples {
        let n1 = n;
        n += 1.0;
        let delta = x - mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        mean += delta_n;
        m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * m2
            - 4.0 * delta_n * m3;
        m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * m2;
        m2 += term1;
        min = min.min(x);
        max = max.max(x);
    }
    let variance = m2 / (n - 1.0);
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (
            n.sqrt() * m3 / m2.powf(1.5),
            n * m4 / (m2 * m2) - 3.0,
        )
    } else {
        (0.0, 0.0)
    };
    let ks_distance = if sigma2_ref > 0.0 {
        Some(ks_test(samples, sigma2_ref)?.distance)
    } else {
        None
    };
    Ok(SampleStatistics {
        count: samples.len(),
        mean,
        variance,
        skewness,
        excess_kurtosis,
        ks_distance,
        min,
        max,
    })
}

/// Least-squares line through `(log n, log value)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
    /// Input abscissae whose value was not positive and so were dropped.
    pub excluded: Vec<f64>,
}

impl SlopeFit {
    pub fn within(&self, target: f64, tol: f64) -> bool {
        (self.slope - target).abs() <= tol
    }
}

pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let mut excluded = Vec::new();
    let mut logs = Vec::with_capacity(points.len());
    for &(n, v) in points {
        if v > 0.0 && v.is_finite() && n > 0.0 {
            logs.push((n.ln(), v.ln()));
        } else {
            excluded.push(n);
        }
    }
    if logs.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "slope fit needs 3 positive points, got {}",
            logs.len()
        )));
    }
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("slope fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
        points: logs,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_points() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(40.0) - 1.0).abs() < 1e-15);
        assert!(normal_cdf(-40.0) >= 0.0 && normal_cdf(-40.0) < 1e-300);
        assert!((normal_cdf(1.959963985) - 0.975).abs() < 1e-9);
        assert!((normal_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
    }

    #[test]
    fn cdf_quantile_by_bisection() {
        let (mut lo, mut hi) = (0.0f64, 5.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < 0.975 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 1.959963985).abs() < 1e-8);
    }

    #[test]
    fn ks_constant_samples() {
        let r = ks_test(&[0.0; 50], 1.0).unwrap();
        assert!((r.distance - 0.5).abs() < 1e-15);
        assert!((r.threshold_at_alpha - 1.628 / 50f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ks_sign_flip_invariance() {
        let a = 0.7;
        let r1 = ks_test(&[-a, a], 1.0).unwrap();
        let r2 = ks_test(&[a, -a], 1.0).unwrap();
        assert_eq!(r1.distance, r2.distance);
    }

    #[test]
    fn ks_rejects_nonpositive_variance() {
        assert!(ks_test(&[1.0], 0.0).is_err());
        assert!(ks_test(&[1.0], -1.0).is_err());
        assert!(ks_test(&[], 1.0).is_err());
    }

    #[test]
    fn summarize_small_cases() {
        let s = summarize(&[1.0, 1.0, 1.0, 1.0], 1.0).unwrap();
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.mean, 1.0);
        let s = summarize(&[-1.0, 1.0], 1.0).unwrap();
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.variance, 2.0);
        assert_eq!((s.min, s.max), (-1.0, 1.0));
        assert!(summarize(&[1.0], 1.0).is_err());
        assert!(summarize(&[], 1.0).is_err());
        assert_eq!(summarize(&[0.0, 0.0], 0.0).unwrap().ks_distance, None);
    }

    #[test]
    fn summarize_matches_two_pass_moments() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37 % 101) as f64).sqrt() - 5.0).collect();
        let s = summarize(&xs, 1.0).unwrap();
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let c2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>();
        let c3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>();
        let c4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>();
        assert!((s.variance - c2 / (n - 1.0)).abs() < 1e-12);
        assert!((s.skewness - n.sqrt() * c3 / c2.powf(1.5)).abs() < 1e-10);
        assert!((s.excess_kurtosis - (n * c4 / (c2 * c2) - 3.0)).abs() < 1e-10);
    }

    #[test]
    fn exact_power_laws() {
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0].iter().map(|&n| (n, 7.0 / n)).collect();
        let f = fit_slope(&pts).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&n| (n, 3.0 / (n * n)))
            .collect();
        assert!((fit_slope(&pts).unwrap().slope + 2.0).abs() < 1e-12);
    }

    #[test]
    fn perturbed_power_law() {
        let pts: Vec<(f64, f64)> = (4..=12)
            .map(|j| {
                let n = (1u64 << j) as f64;
                (n, 2.5 / n.sqrt() * (1.0 + 0.1 * n.sin()))
            })
            .collect();
        let f = fit_slope(&pts).unwrap();
        assert!((f.slope + 0.5).abs() < 0.1, "{}", f.slope);
    }

    #[test]
    fn excludes_nonpositive_values() {
        let pts = [(1.0, 0.0), (2.0, 0.5), (4.0, 0.25), (8.0, 0.125)];
        let f = fit_slope(&pts).unwrap();
        assert_eq!(f.excluded, vec![1.0]);
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!(fit_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 0.0)]).is_err());
    }
}
