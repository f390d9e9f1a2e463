//! Finite-difference Laplacians with homogeneous Dirichlet boundaries.
//!
//! The stencils are unscaled (no `1/h^2` factor). Solver parameters are derived
//! from spectral bounds of the assembled matrix, so the scaling does not affect
//! iterates.

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// 7-point Laplacian on an `n_per_dim`^3 grid: diagonal 6, -1 at each grid neighbor.
/// Unknowns are ordered with the first index varying fastest.
pub fn gen_laplacian_3d(n_per_dim: usize) -> Result<SparseMatrix> {
    if n_per_dim == 0 {
        return Err(Error::InvalidArgument(
            "n_per_dim must be at least 1".into(),
        ));
    }
    let k = n_per_dim;
    let n = k
        .checked_mul(k)
        .and_then(|kk| kk.checked_mul(k))
        .filter(|&n| n.checked_mul(7).is_some())
        .ok_or_else(|| Error::InvalidArgument(format!("grid {k}^3 overflows usize")))?;

    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(7 * n);
    let mut values = Vec::with_capacity(7 * n);
    row_offsets.push(0);
    let (sx, sy, sz) = (1, k, k * k);
    for iz in 0..k {
        for iy in 0..k {
            for ix in 0..k {
                let row = ix * sx + iy * sy + iz * sz;
                // Neighbors in increasing column order.
                let mut push = |col: usize, v: f64| {
                    col_indices.push(col);
                    values.push(v);
                };
                if iz > 0 {
                    push(row - sz, -1.0);
                }
                if iy > 0 {
                    push(row - sy, -1.0);
                }
                if ix > 0 {
                    push(row - sx, -1.0);
                }
                push(row, 6.0);
                if ix + 1 < k {
                    push(row + sx, -1.0);
                }
                if iy + 1 < k {
                    push(row + sy, -1.0);
                }
                if iz + 1 < k {
                    push(row + sz, -1.0);
                }
                row_offsets.push(col_indices.len());
            }
        }
    }
    SparseMatrix::from_csr(n, row_offsets, col_indices, values)
}

/// 3-point Laplacian on `n` interior points: diagonal 2, -1 off-diagonal.
pub fn gen_laplacian_1d(n: usize) -> Result<SparseMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut triplets = Vec::with_capacity(3 * n);
    for i in 0..n {
        if i > 0 {
            triplets.push((i, i - 1, -1.0));
        }
        triplets.push((i, i, 2.0));
        if i + 1 < n {
            triplets.push((i, i + 1, -1.0));
        }
    }
    SparseMatrix::from_triplets(n, triplets)
}

/// Closed-form extreme eigenvalues of [`gen_laplacian_3d`].
pub fn laplacian_3d_extreme_eigenvalues(n_per_dim: usize) -> (f64, f64) {
    let theta = std::f64::consts::PI / (n_per_dim as f64 + 1.0);
    let lo = 6.0 * (1.0 - theta.cos());
    (lo, 12.0 - lo)
}

/// Closed-form extreme eigenvalues of [`gen_laplacian_1d`].
pub fn laplacian_1d_extreme_eigenvalues(n: usize) -> (f64, f64) {
    let theta = std::f64::consts::PI / (n as f64 + 1.0);
    let lo = 2.0 * (1.0 - theta.cos());
    (lo, 4.0 - lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_grid() {
        let a = gen_laplacian_3d(1).unwrap();
        assert_eq!(a.n(), 1);
        assert_eq!(a.values(), &[6.0]);
    }

    #[test]
    fn two_cubed_corners_have_three_neighbors() {
        let a = gen_laplacian_3d(2).unwrap();
        assert_eq!(a.n(), 8);
        for row in 0..8 {
            let (cols, vals) = a.row(row);
            assert_eq!(cols.len(), 4);
            assert_eq!(a.get(row, row), 6.0);
            assert_eq!(vals.iter().filter(|&&v| v == -1.0).count(), 3);
        }
    }

    #[test]
    fn ten_cubed_structure() {
        let a = gen_laplacian_3d(10).unwrap();
        assert_eq!(a.n(), 1000);
        // 6 interior-free faces: nnz = N + 2 * (3 * k^2 * (k - 1))
        assert_eq!(a.nnz(), 1000 + 2 * 3 * 100 * 9);
        for row in 0..a.n() {
            assert_eq!(a.get(row, row), 6.0);
            assert!(a.row(row).0.len() <= 7);
        }
    }

    #[test]
    fn symmetric_and_diagonally_dominant() {
        for k in 1..=6 {
            let a = gen_laplacian_3d(k).unwrap();
            assert!(a.is_symmetric());
            for row in 0..a.n() {
                let (cols, vals) = a.row(row);
                let off: f64 = cols
                    .iter()
                    .zip(vals)
                    .filter(|(&c, _)| c != row)
                    .map(|(_, v)| v.abs())
                    .sum();
                assert!(a.get(row, row) >= off);
                // Fewer than six neighbors means the node touches the boundary.
                if cols.len() < 7 {
                    assert!(a.get(row, row) > off);
                }
            }
        }
    }

    #[test]
    fn zero_size_rejected() {
        assert!(gen_laplacian_3d(0).is_err());
        assert!(gen_laplacian_1d(0).is_err());
    }

    #[test]
    fn overflowing_grid_rejected() {
        assert!(matches!(
            gen_laplacian_3d(usize::MAX / 2),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn one_dimensional_stencil() {
        let a = gen_laplacian_1d(4).unwrap();
        assert_eq!(
            a.to_dense_rows(),
            vec![
                vec![2.0, -1.0, 0.0, 0.0],
                vec![-1.0, 2.0, -1.0, 0.0],
                vec![0.0, -1.0, 2.0, -1.0],
                vec![0.0, 0.0, -1.0, 2.0],
            ]
        );
    }
}
