use nalgebra::DMatrix;

use super::matrix::OperatorMatrix;
use crate::error::{Error, Result};

/// Spectral norm: the largest singular value, from a full SVD.
pub fn op_norm(a: &OperatorMatrix) -> Result<f64> {
    if let Some(index) = a.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let d = a.dim();
    if d == 1 {
        return Ok(a[(0, 0)].abs());
    }
    if a.is_diagonal() {
        return Ok(a.diag().iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let m = DMatrix::from_row_slice(d, d, a.as_slice());
    let sv = m.singular_values();
    Ok(sv.iter().cloned().fold(0.0, f64::max))
}
