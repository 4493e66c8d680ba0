//! TOML experiment configuration.
//!
//! ```toml
//! master_seed = 7
//! n_grid = [64, 128, 256]
//! replicates = 2000
//! suites = ["clt", "lemma_speed"]    # optional, default: all
//! output_dir = "results"             # optional
//!
//! [ensemble]
//! family = "two_point"
//! first = [[0.0]]
//! second = [[1.0]]
//! p = 0.5
//!
//! [[probes]]                         # optional, default: canonical
//! x = "canonical"
//! y = [1.0]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensembles::{Ensemble, EnsembleSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Clt,
    LemmaSpeed,
    Martingale,
    Doob,
    Covariance,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Clt,
        Suite::LemmaSpeed,
        Suite::Martingale,
        Suite::Doob,
        Suite::Covariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Clt => "clt",
            Suite::LemmaSpeed => "lemma_speed",
            Suite::Martingale => "martingale",
            Suite::Doob => "doob",
            Suite::Covariance => "covariance",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s.trim())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown suite {s:?}; expected one of clt, lemma_speed, martingale, doob, covariance"
                ))
            })
    }
}

/// Tunables with defaults; all optional in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteOptions {
    /// Largest `k` of the subset expansion.
    pub doob_k_max: usize,
    /// Threshold `ε` of the Lindeberg events.
    pub lindeberg_eps: f64,
    /// Independent draws per `k` for the mean-zero test of `d_{n,k}`.
    pub mean_zero_draws: usize,
    /// Relative tolerance on the CLT sample variance; defaults to 0.05 for
    /// `d = 1` and 0.07 otherwise.
    pub clt_variance_tol: Option<f64>,
    /// Random probe pairs for the covariance positivity check.
    pub random_probe_pairs: usize,
    /// Shift `c` of the `A + cI` covariance check.
    pub shift: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            doob_k_max: 10,
            lindeberg_eps: 0.1,
            mean_zero_draws: 10_000,
            clt_variance_tol: None,
            random_probe_pairs: 100,
            shift: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum ProbeValue {
    Token(String),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProbe {
    x: ProbeValue,
    y: ProbeValue,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum RawProbes {
    One(RawProbe),
    Many(Vec<RawProbe>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    ensemble: EnsembleSpec,
    probes: Option<RawProbes>,
    n_grid: Vec<i64>,
    replicates: i64,
    master_seed: u64,
    suites: Option<Vec<String>>,
    output_dir: Option<PathBuf>,
    workers: Option<usize>,
    #[serde(default)]
    options: SuiteOptions,
}

/// A resolved probe pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbePair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub ensemble: EnsembleSpec,
    pub probes: Vec<ProbePair>,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub master_seed: u64,
    /// Sorted and deduplicated.
    pub suites: Vec<Suite>,
    pub output_dir: PathBuf,
    /// Worker threads; `None` defers to `OPCLT_WORKERS`, then to the core count.
    pub workers: Option<usize>,
    pub options: SuiteOptions,
    /// Norm bound of the ensemble.
    pub rho: f64,
    pub dim: usize,
}

/// The fields that determine the numerical output.
#[derive(Serialize)]
struct DigestView<'a> {
    ensemble: &'a EnsembleSpec,
    probes: &'a [ProbePair],
    n_grid: &'a [usize],
    replicates: usize,
    master_seed: u64,
    suites: &'a [Suite],
    options: &'a SuiteOptions,
}

impl ExperimentConfig {
    pub fn ensemble(&self) -> Result<Ensemble> {
        Ensemble::from_spec(&self.ensemble)
    }

    /// SHA-256 of the canonical JSON of the semantic fields. Output directory
    /// and worker count are excluded since they do not change any number.
    pub fn digest(&self) -> String {
        let view = DigestView {
            ensemble: &self.ensemble,
            probes: &self.probes,
            n_grid: &self.n_grid,
            replicates: self.replicates,
            master_seed: self.master_seed,
            suites: &self.suites,
            options: &self.options,
        };
        let json = serde_json::to_vec(&view).expect("plain data serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Applies command-line overrides.
    pub fn with_overrides(
        mut self,
        seed: Option<u64>,
        out: Option<PathBuf>,
        suites: Option<Vec<Suite>>,
        workers: Option<usize>,
    ) -> Result<Self> {
        if let Some(seed) = seed {
            self.master_seed = seed;
        }
        if let Some(out) = out {
            self.output_dir = out;
        }
        if let Some(mut suites) = suites {
            if suites.is_empty() {
                return Err(Error::Config("--suites needs at least one suite".into()));
            }
            suites.sort();
            suites.dedup();
            self.suites = suites;
        }
        if let Some(w) = workers {
            if w == 0 {
                return Err(Error::Config("--workers must be at least 1".into()));
            }
            self.workers = Some(w);
        }
        Ok(self)
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses and validates a config document. Every violated invariant is
/// reported, one per line.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut problems = Vec::new();

    let ensemble = match Ensemble::from_spec(&raw.ensemble) {
        Ok(e) => Some(e),
        Err(err) => {
            problems.push(format!("ensemble: {err}"));
            None
        }
    };
    let dim = ensemble.as_ref().map(Ensemble::dim);

    if raw.n_grid.is_empty() {
        problems.push("n_grid: must not be empty".into());
    }
    if let Some(bad) = raw.n_grid.iter().find(|&&n| n < 1) {
        problems.push(format!("n_grid: every entry must be >= 1, found {bad}"));
    }
    if raw.n_grid.windows(2).any(|w| w[0] >= w[1]) {
        problems.push(format!(
            "n_grid: must be strictly increasing, got {:?}",
            raw.n_grid
        ));
    }
    if raw.replicates < 1 {
        problems.push(format!("replicates: must be >= 1, got {}", raw.replicates));
    }
    if raw.workers == Some(0) {
        problems.push("workers: must be >= 1".into());
    }

    let mut suites = Vec::new();
    match &raw.suites {
        None => suites.extend(Suite::ALL),
        Some(names) if names.is_empty() => problems.push("suites: must not be empty".into()),
        Some(names) => {
            for name in names {
                match name.parse::<Suite>() {
                    Ok(s) => suites.push(s),
                    Err(e) => problems.push(format!("suites: {}", error_text(&e))),
                }
            }
        }
    }
    suites.sort();
    suites.dedup();

    let opts = &raw.options;
    if opts.doob_k_max == 0 || opts.doob_k_max > crate::dynamics::DOOB_MAX_K {
        problems.push(format!(
            "options.doob_k_max: must be in 1..={}, got {}",
            crate::dynamics::DOOB_MAX_K,
            opts.doob_k_max
        ));
    }
    if !(opts.lindeberg_eps > 0.0 && opts.lindeberg_eps.is_finite()) {
        problems.push(format!(
            "options.lindeberg_eps: must be positive, got {}",
            opts.lindeberg_eps
        ));
    }
    if opts.mean_zero_draws < 2 {
        problems.push("options.mean_zero_draws: must be >= 2".into());
    }
    if let Some(tol) = opts.clt_variance_tol {
        if !(tol > 0.0 && tol.is_finite()) {
            problems.push(format!("options.clt_variance_tol: must be positive, got {tol}"));
        }
    }
    if !opts.shift.is_finite() {
        problems.push("options.shift: must be finite".into());
    }

    let raw_probes = match raw.probes {
        None => vec![RawProbe {
            x: ProbeValue::Token("canonical".into()),
            y: ProbeValue::Token("canonical".into()),
        }],
        Some(RawProbes::One(p)) => vec![p],
        Some(RawProbes::Many(ps)) => ps,
    };
    if raw_probes.is_empty() {
        problems.push("probes: at least one probe pair is required".into());
    }
    let mut probes = Vec::new();
    for (i, p) in raw_probes.iter().enumerate() {
        let x = resolve_probe(&p.x, 0, dim, &format!("probes[{i}].x"), &mut problems);
        let y = resolve_probe(&p.y, 1, dim, &format!("probes[{i}].y"), &mut problems);
        if let (Some(x), Some(y)) = (x, y) {
            probes.push(ProbePair { x, y });
        }
    }

    if !problems.is_empty() {
        return Err(Error::Config(format!(
            "{} invalid field(s):\n  {}",
            problems.len(),
            problems.join("\n  ")
        )));
    }
    let ensemble = ensemble.expect("no problems recorded");
    Ok(ExperimentConfig {
        ensemble: raw.ensemble,
        probes,
        n_grid: raw.n_grid.iter().map(|&n| n as usize).collect(),
        replicates: raw.replicates as usize,
        master_seed: raw.master_seed,
        suites,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("opclt-out")),
        workers: raw.workers,
        options: raw.options,
        rho: ensemble.norm_bound(),
        dim: ensemble.dim(),
    })
}

fn error_text(e: &Error) -> String {
    match e {
        Error::Config(msg) => msg.clone(),
        other => other.to_string(),
    }
}

/// `canonical` is the basis vector `e_{slot+1}`, falling back to `e_1` in one
/// dimension.
fn resolve_probe(
    value: &ProbeValue,
    slot: usize,
    dim: Option<usize>,
    field: &str,
    problems: &mut Vec<String>,
) -> Option<Vec<f64>> {
    match value {
        ProbeValue::Token(t) if t == "canonical" => {
            let d = dim?;
            let mut v = vec![0.0; d];
            v[slot.min(d - 1)] = 1.0;
            Some(v)
        }
        ProbeValue::Token(t) => {
            problems.push(format!(
                "{field}: expected an array or \"canonical\", got {t:?}"
            ));
            None
        }
        ProbeValue::Explicit(v) => {
            if let Some(i) = v.iter().position(|c| !c.is_finite()) {
                problems.push(format!("{field}: entry {i} is not finite"));
                return None;
            }
            match dim {
                Some(d) if v.len() != d => {
                    problems.push(format!(
                        "{field} has dimension {} but ensemble dim is {d}",
                        v.len()
                    ));
                    None
                }
                _ => Some(v.clone()),
            }
        }
    }
}
