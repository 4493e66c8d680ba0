//! Matrix exponential by scaling and squaring with the degree-13 Padé
//! approximant (Higham 2005).

use super::matrix::OperatorMatrix;
use crate::error::{Error, Result};

const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Computes `e^A`.
///
/// Diagonal input takes an exact entrywise path. Otherwise `A` is scaled by
/// `2^-s` so that its 1-norm is at most `THETA_13`, the `[13/13]` Padé
/// approximant is evaluated, and the result is squared `s` times.
pub fn mat_exp(a: &OperatorMatrix) -> Result<OperatorMatrix> {
    if let Some(index) = a.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let d = a.dim();
    if a.is_diagonal() {
        let diag: Vec<f64> = a.diag().into_iter().map(f64::exp).collect();
        return OperatorMatrix::from_diag(&diag);
    }

    let norm = a.norm_one();
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a.scale(2f64.powi(-s));

    let ident = OperatorMatrix::identity(d);
    let a2 = scaled.matmul(&scaled);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let b = &PADE_13;

    let u_inner = a6
        .scale(b[13])
        .axpy(b[11], &a4)
        .axpy(b[9], &a2);
    let u = scaled.matmul(
        &a6.matmul(&u_inner)
            .axpy(b[7], &a6)
            .axpy(b[5], &a4)
            .axpy(b[3], &a2)
            .axpy(b[1], &ident),
    );
    let v_inner = a6
        .scale(b[12])
        .axpy(b[10], &a4)
        .axpy(b[8], &a2);
    let v = a6
        .matmul(&v_inner)
        .axpy(b[6], &a6)
        .axpy(b[4], &a4)
        .axpy(b[2], &a2)
        .axpy(b[0], &ident);

    let mut r = solve(&v.sub(&u), &v.add(&u))
        .ok_or_else(|| Error::InvalidArgument("singular Padé denominator".into()))?;
    for _ in 0..s {
        r = r.matmul(&r);
    }
    Ok(r)
}

/// Solves `P X = Q` by Gaussian elimination with partial pivoting.
fn solve(p: &OperatorMatrix, q: &OperatorMatrix) -> Option<OperatorMatrix> {
    let d = p.dim();
    let mut lu = p.as_slice().to_vec();
    let mut rhs = q.as_slice().to_vec();
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&i, &j| lu[i * d + col].abs().total_cmp(&lu[j * d + col].abs()))?;
        if lu[pivot * d + col] == 0.0 {
            return None;
        }
        if pivot != col {
            for j in 0..d {
                lu.swap(pivot * d + j, col * d + j);
                rhs.swap(pivot * d + j, col * d + j);
            }
        }
        let diag = lu[col * d + col];
        for row in col + 1..d {
            let factor = lu[row * d + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for j in col..d {
                lu[row * d + j] -= factor * lu[col * d + j];
            }
            for j in 0..d {
                rhs[row * d + j] -= factor * rhs[col * d + j];
            }
        }
    }
    for col in (0..d).rev() {
        let diag = lu[col * d + col];
        for j in 0..d {
            let mut acc = rhs[col * d + j];
            for l in col + 1..d {
                acc -= lu[col * d + l] * rhs[l * d + j];
            }
            rhs[col * d + j] = acc / diag;
        }
    }
    OperatorMatrix::from_row_major(d, rhs).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::op_norm;

    /// Taylor series with 60 terms on `A / 2^10`, squared back ten times.
    fn taylor_oracle(a: &OperatorMatrix) -> OperatorMatrix {
        let d = a.dim();
        let scaled = a.scale(1.0 / 1024.0);
        let mut term = OperatorMatrix::identity(d);
        let mut sum = OperatorMatrix::identity(d);
        for k in 1..60 {
            term = term.matmul(&scaled).scale(1.0 / k as f64);
            sum = sum.add(&term);
        }
        for _ in 0..10 {
            sum = sum.matmul(&sum);
        }
        sum
    }

    fn lcg_matrix(d: usize, seed: u64) -> OperatorMatrix {
        let mut state = seed;
        let data = (0..d * d)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        OperatorMatrix::from_row_major(d, data).unwrap()
    }

    #[test]
    fn zero_gives_identity() {
        assert_eq!(
            mat_exp(&OperatorMatrix::zeros(2)).unwrap(),
            OperatorMatrix::identity(2)
        );
    }

    #[test]
    fn nilpotent_series_terminates() {
        let n = OperatorMatrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        let e = mat_exp(&n).unwrap();
        let expected = OperatorMatrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert!(e.sub(&expected).max_abs() < 1e-15, "{e:?}");
    }

    #[test]
    fn diagonal_is_exact() {
        let a = OperatorMatrix::from_diag(&[2f64.ln(), 0.0]).unwrap();
        let e = mat_exp(&a).unwrap();
        assert!((e[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(e[(1, 1)], 1.0);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn matches_taylor_oracle_on_random_4x4() {
        for seed in 0..20 {
            let a = lcg_matrix(4, seed);
            let e = mat_exp(&a).unwrap();
            let oracle = taylor_oracle(&a);
            let rel = op_norm(&e.sub(&oracle)).unwrap() / op_norm(&oracle).unwrap();
            assert!(rel < 1e-12, "seed {seed}: rel {rel:e}");
        }
    }

    #[test]
    fn large_norm_uses_squaring() {
        let a = lcg_matrix(3, 99).scale(12.0);
        let e = mat_exp(&a).unwrap();
        let oracle = taylor_oracle(&a);
        let rel = op_norm(&e.sub(&oracle)).unwrap() / op_norm(&oracle).unwrap();
        assert!(rel < 1e-11, "rel {rel:e}");
    }

    #[test]
    fn rotation_generator() {
        let t = 0.7f64;
        let a = OperatorMatrix::from_rows(&[[0.0, -t], [t, 0.0]]).unwrap();
        let e = mat_exp(&a).unwrap();
        assert!((e[(0, 0)] - t.cos()).abs() < 1e-15);
        assert!((e[(1, 0)] - t.sin()).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonfinite() {
        let mut a = OperatorMatrix::zeros(2);
        a[(0, 1)] = f64::NAN;
        assert!(mat_exp(&a).is_err());
    }
}
