//! Small dense matrices for the expectation oracles and reference solves.

use crate::error::{check_len, Error, Result};
use crate::sparse::SparseMatrix;

/// Default dimension cap for dense mirrors of sparse operators.
pub const DEFAULT_ORACLE_CAP: usize = 64;

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            check_len(n, row.len())?;
            entries.extend_from_slice(row);
        }
        Ok(Self { n, entries })
    }

    /// Dense mirror of `a`, refusing dimensions above [`DEFAULT_ORACLE_CAP`].
    pub fn from_sparse(a: &SparseMatrix) -> Result<Self> {
        Self::from_sparse_capped(a, DEFAULT_ORACLE_CAP)
    }

    pub fn from_sparse_capped(a: &SparseMatrix, cap: usize) -> Result<Self> {
        if a.n() > cap {
            return Err(Error::CapExceeded {
                count: a.n() as u128,
                cap: cap as u128,
            });
        }
        let mut m = Self::zeros(a.n());
        for i in 0..a.n() {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.entries[i * n + j] += a * other.entries[k * n + j];
                }
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> DenseMatrix {
        DenseMatrix {
            n: self.n,
            entries: self.entries.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &DenseMatrix, s: f64) -> DenseMatrix {
        assert_eq!(self.n, other.n);
        DenseMatrix {
            n: self.n,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `I - s * self`.
    pub fn identity_minus(&self, s: f64) -> DenseMatrix {
        Self::identity(self.n).add_scaled(self, -s)
    }

    /// Solves `self x = b` by LU factorisation with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, b.len())?;
        let n = self.n;
        let mut lu = self.entries.clone();
        let mut x = b.to_vec();
        let scale = self.entries.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Err(Error::Singular);
        }
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| lu[p * n + col].abs().total_cmp(&lu[q * n + col].abs()))
                .unwrap();
            if lu[pivot * n + col].abs() <= scale * f64::EPSILON * n as f64 {
                return Err(Error::Singular);
            }
            if pivot != col {
                for j in 0..n {
                    lu.swap(col * n + j, pivot * n + j);
                }
                x.swap(col, pivot);
            }
            let d = lu[col * n + col];
            for row in col + 1..n {
                let factor = lu[row * n + col] / d;
                if factor == 0.0 {
                    continue;
                }
                lu[row * n + col] = 0.0;
                for j in col + 1..n {
                    lu[row * n + j] -= factor * lu[col * n + j];
                }
                x[row] -= factor * x[col];
            }
        }
        for row in (0..n).rev() {
            let mut acc = x[row];
            for j in row + 1..n {
                acc -= lu[row * n + j] * x[j];
            }
            x[row] = acc / lu[row * n + row];
        }
        Ok(x)
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.entries[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.entries[i * self.n + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_needs_pivoting() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
        let x = a.solve(&[1.0, 8.0]).unwrap();
        assert!((x[0] - 2.5).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_detected() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(a.solve(&[1.0, 1.0]), Err(Error::Singular)));
        assert!(matches!(
            DenseMatrix::zeros(3).solve(&[0.0; 3]),
            Err(Error::Singular)
        ));
    }

    #[test]
    fn solve_residual_small() {
        let a = crate::laplacian::gen_laplacian_3d(3).unwrap();
        let d = DenseMatrix::from_sparse(&a).unwrap();
        let b: Vec<f64> = (0..27).map(|i| (i as f64).sin()).collect();
        let x = d.solve(&b).unwrap();
        let r = a.matvec(&x).unwrap();
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-13);
        }
    }

    #[test]
    fn cap_enforced() {
        let a = crate::laplacian::gen_laplacian_3d(5).unwrap();
        assert!(matches!(
            DenseMatrix::from_sparse(&a),
            Err(Error::CapExceeded { .. })
        ));
        assert!(DenseMatrix::from_sparse_capped(&a, 125).is_ok());
    }

    #[test]
    fn matmul_identity() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(a.matmul(&DenseMatrix::identity(2)), a);
        let sq = a.matmul(&a);
        assert_eq!(
            sq,
            DenseMatrix::from_rows(&[vec![7.0, 10.0], vec![15.0, 22.0]]).unwrap()
        );
    }
}
