use crate::covariance::{projected_quadrature, sigma_commuting_oracle, sigma_full, MATERIALIZE_LIMIT};
use crate::dynamics::{
    difference_check, doob_decomposition, lemma_speed_curve, proof_curves, riemann_cov_sum,
    sample_xi_vectors, PrecomputedKernel,
};
use crate::ensembles::{Ensemble, RngStream};
use crate::error::Result;
use crate::stats::{fit_slope, ks_test, summarize, KS_CRITICAL_01};

use super::config::{ExperimentConfig, Suite};
use super::report::{Check, Observation};
use super::table::{Cell, Table};

pub(super) struct SuiteOutput {
    pub table: Table,
    pub checks: Vec<Check>,
    pub markers: Vec<String>,
    pub observations: Vec<Observation>,
}

impl SuiteOutput {
    fn new(header: &[&str]) -> Self {
        SuiteOutput {
            table: Table::new(header),
            checks: Vec::new(),
            markers: Vec::new(),
            observations: Vec::new(),
        }
    }

    fn observe(&mut self, name: impl Into<String>, value: f64) {
        self.observations.push(Observation {
            name: name.into(),
            value,
        });
    }
}

pub(super) fn run_suite(suite: Suite, cfg: &ExperimentConfig, e: &Ensemble) -> Result<SuiteOutput> {
    match suite {
        Suite::Clt => clt(cfg, e),
        Suite::LemmaSpeed => lemma_speed(cfg, e),
        Suite::Martingale => martingale(cfg, e),
        Suite::Doob => doob(cfg, e),
        Suite::Covariance => covariance(cfg, e),
    }
}

/// Slope of `values` against the grid, if at least three are positive.
fn slope(grid: &[usize], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = grid.iter().map(|&n| n as f64).zip(values.iter().copied()).collect();
    fit_slope(&pts).ok().map(|f| f.slope)
}

fn norm(v: &[f64]) -> f64 {
    crate::linalg::norm2(v)
}

pub(super) const SKIPPED: &str = "skipped";

fn clt(cfg: &ExperimentConfig, e: &Ensemble) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::new(&[
        "n",
        "replicate_count",
        "sigma2_ref",
        "sample_mean",
        "sample_variance",
        "skewness",
        "excess_kurtosis",
        "ks_distance",
        "ks_threshold_01",
        "probe",
        "max_abs_sample",
    ]);
    let reps = cfg.replicates;
    let tol = cfg
        .options
        .clt_variance_tol
        .unwrap_or(if e.dim() == 1 { 0.05 } else { 0.07 });
    let degenerate = e.is_degenerate();
    let sigma2: Vec<f64> = cfg
        .probes
        .iter()
        .map(|p| crate::covariance::sigma_projected(e, &p.x, &p.y))
        .collect::<Result<_>>()?;
    let last_n = *cfg.n_grid.last().expect("validated grid");
    let mut ks_curves = vec![Vec::new(); cfg.probes.len()];
    let mut worst_zero_ratio = vec![0.0f64; cfg.probes.len()];

    for &n in &cfg.n_grid {
        let kern = PrecomputedKernel::new(e, n)?;
        for (i, p) in cfg.probes.iter().enumerate() {
            let xis = sample_xi_vectors(e, &kern, &p.x, reps, cfg.master_seed, "clt")?;
            let values: Vec<f64> = xis.iter().map(|v| crate::linalg::dot(&p.y, v)).collect();
            let stats = summarize(&values, 0.0)?;
            let threshold = KS_CRITICAL_01 / (reps as f64).sqrt();
            let ks = if sigma2[i] > 0.0 {
                Some(ks_test(&values, sigma2[i])?)
            } else {
                None
            };
            let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            out.table.push(vec![
                n.into(),
                reps.into(),
                sigma2[i].into(),
                stats.mean.into(),
                stats.variance.into(),
                stats.skewness.into(),
                stats.excess_kurtosis.into(),
                ks.map_or(Cell::Text(SKIPPED.into()), |k| Cell::Num(k.distance)),
                threshold.into(),
                i.into(),
                max_abs.into(),
            ])?;
            if let Some(k) = ks {
                ks_curves[i].push(k.distance);
            }
            if degenerate {
                let scale = (n as f64).sqrt() * e.norm_bound().exp() * norm(&p.x).max(f64::MIN_POSITIVE);
                let worst = xis.iter().map(|v| norm(v)).fold(0.0f64, f64::max);
                worst_zero_ratio[i] = worst_zero_ratio[i].max(worst / scale);
            }
            if n == last_n {
                out.observe(format!("sigma2_ref[{i}]"), sigma2[i]);
                out.observe(format!("sample_variance[{i}]"), stats.variance);
            }
            if n == last_n && !degenerate && sigma2[i] > 0.0 {
                let rel = (stats.variance - sigma2[i]) / sigma2[i];
                out.checks.push(Check::within(format!("variance_rel_error[{i}]"), rel, 0.0, tol));
                let k = ks.expect("positive variance");
                out.checks.push(Check::below(format!("ks_distance[{i}]"), k.distance, k.threshold_at_alpha));
            }
        }
    }

    if degenerate {
        out.markers
            .push("ks-skipped: degenerate ensemble, the limit is the point mass at 0".into());
        for (i, r) in worst_zero_ratio.iter().enumerate() {
            out.checks.push(Check::at_most(format!("xi_zero_ratio[{i}]"), *r, 1e-11));
        }
    } else {
        for (i, s) in sigma2.iter().enumerate() {
            if *s <= 0.0 {
                out.markers
                    .push(format!("ks-skipped: zero reference variance for probe {i}"));
            }
        }
    }
    for (i, curve) in ks_curves.iter().enumerate() {
        if curve.len() == cfg.n_grid.len() {
            if let Some(s) = slope(&cfg.n_grid, curve) {
                out.observe(format!("ks_distance_slope[{i}]"), s);
            }
        }
    }
    Ok(out)
}

fn lemma_speed(cfg: &ExperimentConfig, e: &Ensemble) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::new(&["n", "norm_outer", "norm_inner", "k_max_norm"]);
    let curve = lemma_speed_curve(e, &cfg.n_grid)?;
    for p in &curve {
        out.table
            .push(vec![p.n.into(), p.outer.into(), p.inner.into(), p.k_max.into()])?;
    }
    let largest = curve
        .iter()
        .map(|p| p.outer.max(p.inner).max(p.k_max))
        .fold(0.0f64, f64::max);
    if largest == 0.0 {
        out.markers.push("exact-zero".into());
        out.checks.push(Check::at_most("max_norm", largest, 0.0));
        return Ok(out);
    }
    if curve.len() < 3 {
        out.markers.push("slope-skipped: fewer than 3 grid points".into());
        return Ok(out);
    }
    let col = |f: fn(&crate::dynamics::LemmaPoint) -> f64| curve.iter().map(f).collect::<Vec<_>>();
    for (name, values, target) in [
        ("outer_slope", col(|p| p.outer), -1.0),
        ("inner_slope", col(|p| p.inner), -2.0),
        ("k_max_slope", col(|p| p.k_max), -1.0),
    ] {
        match slope(&cfg.n_grid, &values) {
            Some(s) => out.checks.push(Check::within(name, s, target, 0.1)),
            None => out.markers.push(format!("{name}-skipped: fewer than 3 positive values")),
        }
    }
    let last = curve.last().expect("nonempty");
    out.observe("outer_constant", last.outer * last.n as f64);
    out.observe("inner_constant", last.inner * (last.n as f64).powi(2));
    Ok(out)
}

fn martingale(cfg: &ExperimentConfig, e: &Ensemble) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::new(&[
        "n",
        "mean_Rn_norm",
        "mean_diff_sq",
        "mean_Mn_norm",
        "mean_Mn_norm_sq",
        "riemann_cov_error",
        "median_Rn_norm",
        "xi_minus_s_q90",
        "max_diff_norm",
        "diff_bound",
        "bound_violations",
        "lindeberg_events",
        "max_mean_zero_z",
        "max_cross_moment_z",
    ]);
    let probe = &cfg.probes[0];
    let (x, y) = (&probe.x, &probe.y);
    let seed = cfg.master_seed;
    let grid = &cfg.n_grid;
    let rho = e.norm_bound();
    let eps = cfg.options.lindeberg_eps;
    let lindeberg_from = (2.0 * rho * rho.exp() / eps).powi(2);

    let points = proof_curves(e, grid, x, cfg.replicates.max(2), seed)?;
    let sigma = crate::covariance::sigma_projected(e, x, y)?;
    let mut riemann = Vec::new();
    let mut violations = 0usize;
    let mut late_events = 0usize;
    let mut late_points = 0usize;
    let mut worst_mean_z = 0.0f64;
    let mut worst_cross_z = 0.0f64;
    let z = |m: f64, se: f64| {
        if se > 0.0 {
            m.abs() / se
        } else if m == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    for p in &points {
        let kern = PrecomputedKernel::new(e, p.n)?;
        let err = (riemann_cov_sum(e, &kern, x, y) - sigma).abs();
        riemann.push(err);
        let dc = difference_check(
            e,
            &kern,
            cfg.replicates,
            cfg.options.mean_zero_draws,
            eps,
            seed,
        )?;
        violations += dc.violations;
        if p.n as f64 > lindeberg_from {
            late_events += dc.lindeberg_events;
            late_points += 1;
        }
        let mean_z = dc
            .mean_tests
            .iter()
            .map(|t| z(t.mean_norm, t.std_error))
            .fold(0.0f64, f64::max);
        let cross_z = p
            .cross_moments
            .iter()
            .map(|c| z(c.mean, c.std_error))
            .fold(0.0f64, f64::max);
        worst_mean_z = worst_mean_z.max(mean_z);
        worst_cross_z = worst_cross_z.max(cross_z);
        out.table.push(vec![
            p.n.into(),
            p.mean_r_norm.into(),
            p.mean_diff_sq.into(),
            p.mean_m_norm.into(),
            p.mean_m_norm_sq.into(),
            err.into(),
            p.median_r_norm.into(),
            p.xi_minus_s_q90.into(),
            dc.max_norm.into(),
            dc.bound.into(),
            dc.violations.into(),
            dc.lindeberg_events.into(),
            mean_z.into(),
            cross_z.into(),
        ])?;
    }

    out.checks.push(Check::at_most("difference_bound_violations", violations as f64, 0.0));
    if late_points > 0 {
        out.checks
            .push(Check::at_most("lindeberg_events_past_threshold", late_events as f64, 0.0));
    } else {
        out.markers.push(format!(
            "lindeberg-skipped: no grid point with n > {lindeberg_from:.1}"
        ));
    }

    if e.is_degenerate() {
        out.markers.push("exact-zero".into());
        let largest = points
            .iter()
            .map(|p| p.mean_r_norm.max(p.mean_m_norm).max(p.mean_diff_sq.sqrt()))
            .fold(0.0f64, f64::max);
        let scale = (*grid.last().expect("validated grid") as f64).sqrt() * 1e-10;
        out.checks.push(Check::at_most("degenerate_max_norm", largest, scale));
        return Ok(out);
    }

    out.checks.push(Check::at_most("mean_zero_z", worst_mean_z, 4.0));
    out.checks.push(Check::at_most("cross_moment_z", worst_cross_z, 4.0));
    if grid.len() < 3 {
        out.markers.push("slope-skipped: fewer than 3 grid points".into());
        return Ok(out);
    }
    let col = |f: fn(&crate::dynamics::ProofPoint) -> f64| points.iter().map(f).collect::<Vec<_>>();
    let slopes = [
        ("median_Rn_norm_slope", col(|p| p.median_r_norm), -0.5, 0.2),
        ("mean_diff_sq_slope", col(|p| p.mean_diff_sq), -2.0, 0.3),
        ("mean_Mn_norm_sq_slope", col(|p| p.mean_m_norm_sq), -1.0, 0.25),
        ("mean_Mn_norm_slope", col(|p| p.mean_m_norm), -0.5, 0.2),
        ("riemann_cov_error_slope", riemann.clone(), -1.0, 0.2),
    ];
    for (name, values, target, tol) in slopes {
        match slope(grid, &values) {
            Some(s) => out.checks.push(Check::within(name, s, target, tol)),
            None => out.markers.push(format!("{name}-skipped: fewer than 3 positive values")),
        }
    }
    let q90 = col(|p| p.xi_minus_s_q90);
    if let Some(s) = slope(grid, &q90) {
        out.checks.push(Check::at_most("xi_minus_s_q90_slope", s, -0.4));
    }
    let rises = q90.windows(2).filter(|w| w[1] >= w[0]).count();
    out.checks.push(Check::at_most("xi_minus_s_q90_increases", rises as f64, 0.0));
    let last = points.last().expect("nonempty");
    out.observe("Rn_median_constant", last.median_r_norm * last.n as f64);
    out.observe("Mn_norm_sq_constant", last.mean_m_norm_sq * last.n as f64);
    Ok(out)
}

fn doob(cfg: &ExperimentConfig, e: &Ensemble) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::new(&["k", "identity_residual", "max_subset_bound_ratio", "n", "subsets"]);
    let k_max = cfg.options.doob_k_max;
    let n = cfg.n_grid[0].max(k_max);
    let kern = PrecomputedKernel::new(e, n)?;
    let x = &cfg.probes[0].x;
    let mut worst_residual = 0.0f64;
    let mut worst_ratio = 0.0f64;
    for k in 1..=k_max {
        let mut rng = RngStream::derive(cfg.master_seed, "doob", n as u64, k as u64);
        let draws: Vec<_> = (0..k).map(|_| e.sample(&mut rng)).collect();
        let dec = doob_decomposition(e, n, k, &draws, x, &kern)?;
        worst_residual = worst_residual.max(dec.identity_residual);
        worst_ratio = worst_ratio.max(dec.max_bound_ratio);
        out.table.push(vec![
            k.into(),
            dec.identity_residual.into(),
            dec.max_bound_ratio.into(),
            n.into(),
            dec.subsets.into(),
        ])?;
    }
    out.checks.push(Check::at_most("identity_residual", worst_residual, 1e-10));
    out.checks
        .push(Check::at_most("subset_bound_ratio", worst_ratio, 1.0 + 1e-12));
    Ok(out)
}

fn rel_delta(a: f64, reference: f64) -> f64 {
    let diff = (a - reference).abs();
    if reference != 0.0 {
        diff / reference.abs()
    } else {
        diff
    }
}

fn covariance(cfg: &ExperimentConfig, e: &Ensemble) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::new(&[
        "probe",
        "sigma_projected",
        "sigma_full_form",
        "full_rel_delta",
        "sigma_commuting",
        "commuting_rel_delta",
        "quadrature_nodes",
        "doubling_change",
        "shift_rel_error",
        "symmetry_defect",
    ]);
    let na = || Cell::Text("NA".into());
    let d = e.dim();
    let full = if d <= MATERIALIZE_LIMIT {
        Some(sigma_full(e)?)
    } else {
        out.markers
            .push(format!("full-route-skipped: d = {d} exceeds {MATERIALIZE_LIMIT}"));
        None
    };
    let commuting = if e.is_diagonal() {
        Some(sigma_commuting_oracle(e)?)
    } else {
        None
    };
    let c = cfg.options.shift;
    let shifted = e.shifted(c)?;
    let growth = (2.0 * c).exp();
    let symmetry = full.as_ref().and_then(|f| f.symmetry_defect());

    let (mut worst_full, mut worst_comm, mut worst_change, mut worst_shift) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut all_converged = true;
    for (i, p) in cfg.probes.iter().enumerate() {
        let proj = projected_quadrature(e, &p.x, &p.y)?;
        all_converged &= proj.converged;
        worst_change = worst_change.max(proj.last_change);
        let full_form = full
            .as_ref()
            .map(|f| f.quadratic_form(&p.x, &p.y))
            .transpose()?;
        let full_delta = full_form.map(|v| rel_delta(v, proj.value));
        let comm = commuting
            .as_ref()
            .map(|s| s.projected(&p.x, &p.y))
            .transpose()?;
        let comm_delta = comm.map(|v| rel_delta(proj.value, v));
        let shift_value = projected_quadrature(&shifted, &p.x, &p.y)?.value;
        let shift_err = rel_delta(shift_value, growth * proj.value);
        worst_full = worst_full.max(full_delta.unwrap_or(0.0));
        worst_comm = worst_comm.max(comm_delta.unwrap_or(0.0));
        worst_shift = worst_shift.max(shift_err);
        out.table.push(vec![
            i.into(),
            proj.value.into(),
            full_form.map_or_else(na, Cell::Num),
            full_delta.map_or_else(na, Cell::Num),
            comm.map_or_else(na, Cell::Num),
            comm_delta.map_or_else(na, Cell::Num),
            proj.nodes.into(),
            proj.last_change.into(),
            shift_err.into(),
            symmetry.map_or_else(na, Cell::Num),
        ])?;
    }

    if full.is_some() {
        out.checks.push(Check::at_most("full_vs_projected", worst_full, 1e-10));
    }
    if let Some(comm) = &commuting {
        out.checks.push(Check::at_most("commuting_vs_projected", worst_comm, 1e-10));
        if let (Some(f), Some(cf)) = (full.as_ref().and_then(|f| f.full()), comm.full()) {
            let scale = cf.max_abs();
            let diff = f.sub(cf).max_abs();
            let rel = if scale > 0.0 { diff / scale } else { diff };
            out.checks.push(Check::at_most("full_vs_commuting", rel, 1e-10));
        }
    }
    out.checks.push(Check::at_most(
        "quadrature_converged",
        if all_converged { 0.0 } else { 1.0 },
        0.0,
    ));
    out.checks.push(Check::below("doubling_change", worst_change, 1e-12));
    out.checks.push(Check::at_most("shift_rel_error", worst_shift, 1e-10));

    let mut rng = RngStream::derive(cfg.master_seed, "covariance", 0, 0);
    let mut min_var = f64::INFINITY;
    for _ in 0..cfg.options.random_probe_pairs {
        let x: Vec<f64> = (0..d).map(|_| 2.0 * rng.uniform() - 1.0).collect();
        let y: Vec<f64> = (0..d).map(|_| 2.0 * rng.uniform() - 1.0).collect();
        min_var = min_var.min(projected_quadrature(e, &x, &y)?.value);
    }
    if cfg.options.random_probe_pairs > 0 {
        out.checks.push(Check::at_least("min_random_probe_variance", min_var, 0.0));
    }

    if e.is_degenerate() {
        out.markers.push("exact-zero".into());
        let largest = full
            .as_ref()
            .and_then(|f| f.full())
            .map_or(0.0, |m| m.max_abs());
        out.checks.push(Check::at_most("sigma_max_abs", largest, 0.0));
    }
    if let Some(s) = symmetry {
        out.observe("symmetry_defect", s);
    }
    Ok(out)
}
