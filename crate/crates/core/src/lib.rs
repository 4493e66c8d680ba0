//! Simulation and verification laboratory for the central limit theorem of
//! products of random matrix exponentials
//! `sqrt(n) (e^{A_1/n} ... e^{A_n/n} - e^{E A})`.

pub mod covariance;
pub mod dynamics;
pub mod ensembles;
pub mod experiment;
pub mod error;
pub mod linalg;
pub mod stats;

pub use error::{Error, Result};
