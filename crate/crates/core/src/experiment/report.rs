use serde::Serialize;

use super::config::Suite;

/// Pass rule of a check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Criterion {
    /// `|measured - target| <= tolerance`
    Within { target: f64, tolerance: f64 },
    AtMost { bound: f64 },
    Below { bound: f64 },
    AtLeast { bound: f64 },
}

impl Criterion {
    pub fn holds(&self, v: f64) -> bool {
        match *self {
            Criterion::Within { target, tolerance } => (v - target).abs() <= tolerance,
            Criterion::AtMost { bound } => v <= bound,
            Criterion::Below { bound } => v < bound,
            Criterion::AtLeast { bound } => v >= bound,
        }
    }
}

/// A measured value against its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    #[serde(flatten)]
    pub criterion: Criterion,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, criterion: Criterion) -> Self {
        Check {
            name: name.into(),
            measured,
            passed: criterion.holds(measured),
            criterion,
        }
    }

    pub fn within(name: impl Into<String>, measured: f64, target: f64, tolerance: f64) -> Self {
        Self::new(name, measured, Criterion::Within { target, tolerance })
    }

    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self::new(name, measured, Criterion::AtMost { bound })
    }

    pub fn below(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self::new(name, measured, Criterion::Below { bound })
    }

    pub fn at_least(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self::new(name, measured, Criterion::AtLeast { bound })
    }
}

/// An exploratory number with no pass/fail rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteStatus {
    Passed,
    Failed,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub status: SuiteStatus,
    pub checks: Vec<Check>,
    /// Flags such as `exact-zero` or a skipped KS test.
    pub markers: Vec<String>,
    pub observations: Vec<Observation>,
    pub csv: Option<String>,
    pub error: Option<String>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.status == SuiteStatus::Passed
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub version: String,
    pub config_digest: String,
    pub master_seed: u64,
    pub family: crate::ensembles::FamilyKind,
    pub dim: usize,
    pub rho: f64,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub workers: usize,
    pub suites: Vec<SuiteReport>,
    pub passed: bool,
    pub seconds: f64,
}

impl RunReport {
    pub fn suite(&self, suite: Suite) -> Option<&SuiteReport> {
        self.suites.iter().find(|s| s.suite == suite)
    }
}
