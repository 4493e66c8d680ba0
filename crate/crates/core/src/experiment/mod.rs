//! Config-driven runs of the Monte Carlo and exact suites, with CSV tables and
//! a JSON summary.

mod config;
mod report;
mod suites;
mod table;

pub use config::{load_config, parse_config, ExperimentConfig, ProbePair, Suite, SuiteOptions};
pub use report::{Check, Criterion, Observation, RunReport, SuiteReport, SuiteStatus};
pub use table::{emit_csv, Cell, Table};

use std::time::Instant;

use crate::error::{Error, Result};

/// Environment variable giving the default worker count.
pub const WORKERS_ENV: &str = "OPCLT_WORKERS";

/// File name of the JSON summary inside the output directory.
pub const SUMMARY_FILE: &str = "summary.json";

/// Worker count: explicit value, then `OPCLT_WORKERS`, then the number of
/// logical cores.
pub fn resolve_workers(explicit: Option<usize>) -> Result<usize> {
    if let Some(w) = explicit {
        return Ok(w);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(w) if w >= 1 => Ok(w),
            _ => Err(Error::Config(format!(
                "{WORKERS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs every configured suite on a dedicated pool, writes `<suite>.csv` and
/// the summary into the output directory, and returns the report. A failing
/// or erroring suite does not stop the others.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    let workers = resolve_workers(config.workers)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let ensemble = config.ensemble()?;
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| Error::Io(format!("{}: {e}", config.output_dir.display())))?;

    let started = Instant::now();
    let mut reports = Vec::with_capacity(config.suites.len());
    for &suite in &config.suites {
        let t0 = Instant::now();
        let outcome = pool.install(|| suites::run_suite(suite, config, &ensemble));
        let report = match outcome {
            Ok(out) => {
                let file = format!("{}.csv", suite.name());
                emit_csv(&out.table, &config.output_dir.join(&file))?;
                let status = if out.checks.iter().all(|c| c.passed) {
                    SuiteStatus::Passed
                } else {
                    SuiteStatus::Failed
                };
                SuiteReport {
                    suite,
                    status,
                    checks: out.checks,
                    markers: out.markers,
                    observations: out.observations,
                    csv: Some(file),
                    error: None,
                    seconds: t0.elapsed().as_secs_f64(),
                }
            }
            Err(err) => SuiteReport {
                suite,
                status: SuiteStatus::Error,
                checks: Vec::new(),
                markers: Vec::new(),
                observations: Vec::new(),
                csv: None,
                error: Some(err.to_string()),
                seconds: t0.elapsed().as_secs_f64(),
            },
        };
        reports.push(report);
    }

    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: config.digest(),
        master_seed: config.master_seed,
        family: ensemble.kind(),
        dim: ensemble.dim(),
        rho: ensemble.norm_bound(),
        n_grid: config.n_grid.clone(),
        replicates: config.replicates,
        workers,
        passed: reports.iter().all(SuiteReport::passed),
        suites: reports,
        seconds: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(config.output_dir.join(SUMMARY_FILE), json + "\n")?;
    Ok(report)
}
