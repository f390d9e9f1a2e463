//! Incomplete matrix-vector products `D_T A f`: rows in the mask are computed
//! exactly, every other row is returned as `0.0`.

use crate::error::{check_len, Error, Result};
use crate::sparse::SparseMatrix;
use crate::straggle::RowMask;

fn check_mask(a: &SparseMatrix, mask: &RowMask) -> Result<()> {
    if mask.n() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: mask.n(),
        });
    }
    Ok(())
}

/// `y = D_T A f`. Only the masked rows are touched.
pub fn partial_matvec(a: &SparseMatrix, f: &[f64], mask: &RowMask) -> Result<Vec<f64>> {
    check_len(a.n(), f.len())?;
    check_mask(a, mask)?;
    let mut y = vec![0.0; a.n()];
    partial_matvec_into(a, f, mask, &mut y);
    Ok(y)
}

/// Writes `D_T A f` into `y`, which must have length `a.n()`.
pub(crate) fn partial_matvec_into(a: &SparseMatrix, f: &[f64], mask: &RowMask, y: &mut [f64]) {
    if mask.is_full() {
        a.matvec_into(f, y);
        return;
    }
    y.fill(0.0);
    for &row in mask.indices() {
        y[row] = a.row_dot(row, f);
    }
}

/// `(I - omega_hat D_T A) z`, evaluated row by row without forming the product.
pub fn apply_iteration_matrix(
    a: &SparseMatrix,
    z: &[f64],
    mask: &RowMask,
    omega_hat: f64,
) -> Result<Vec<f64>> {
    check_len(a.n(), z.len())?;
    check_mask(a, mask)?;
    let mut out = z.to_vec();
    for &row in mask.indices() {
        out[row] = z[row] - omega_hat * a.row_dot(row, z);
    }
    Ok(out)
}
