use super::matrix::OperatorMatrix;
use crate::error::{Error, Result};

/// Kronecker product `A ⊗ B` of two `d x d` matrices.
///
/// Index convention: `(x ⊗ y)[i * d + j] = x[i] * y[j]`, so that
/// `(A ⊗ B)[(i*d + j, k*d + l)] = A[(i, k)] * B[(j, l)]`.
pub fn kron2(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<OperatorMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let d = a.dim();
    let dd = d * d;
    let mut data = vec![0.0; dd * dd];
    for i in 0..d {
        for k in 0..d {
            let aik = a[(i, k)];
            for j in 0..d {
                let row = i * d + j;
                for l in 0..d {
                    data[row * dd + k * d + l] = aik * b[(j, l)];
                }
            }
        }
    }
    OperatorMatrix::from_row_major(dd, data)
}

/// `x ⊗ y` under the same convention as [`kron2`].
pub fn kron_vec(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter()
        .flat_map(|&a| y.iter().map(move |&b| a * b))
        .collect()
}
