//! Dense small-matrix numerics shared by every other module.

mod expm;
mod kron;
mod matrix;
mod norm;
pub mod quadrature;

pub use expm::mat_exp;
pub use kron::{kron2, kron_vec};
pub use matrix::{dot, norm2, OperatorMatrix, Vector};
pub use norm::op_norm;
pub use quadrature::{gauss_legendre, QuadratureRule};
