//! Square sparse matrices in compressed-row storage.
//!
//! Every kernel that touches a row accumulates its products left to right in
//! column order, so a row dot product gives the same bits whether it is
//! evaluated as part of a full product or of a masked partial product.

use crate::error::{check_len, Error, Result};

/// Immutable square matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, validating every structural invariant.
    pub fn from_csr(
        n: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidStructure("dimension must be positive".into()));
        }
        if row_offsets.len() != n + 1 {
            return Err(Error::InvalidStructure(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n + 1
            )));
        }
        if row_offsets[0] != 0 || row_offsets[n] != col_indices.len() {
            return Err(Error::InvalidStructure(
                "row_offsets must start at 0 and end at nnz".into(),
            ));
        }
        if col_indices.len() != values.len() {
            return Err(Error::InvalidStructure(
                "col_indices and values differ in length".into(),
            ));
        }
        for row in 0..n {
            let (start, end) = (row_offsets[row], row_offsets[row + 1]);
            if start > end {
                return Err(Error::InvalidStructure(format!(
                    "row_offsets decrease at row {row}"
                )));
            }
            let cols = &col_indices[start..end];
            if let Some(&c) = cols.iter().find(|&&c| c >= n) {
                return Err(Error::InvalidStructure(format!(
                    "column {c} out of range in row {row}"
                )));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidStructure(format!(
                    "columns of row {row} are not strictly increasing"
                )));
            }
        }
        Ok(Self {
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Assembles a matrix from `(row, col, value)` triplets (0-based).
    /// Duplicate coordinates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidStructure("dimension must be positive".into()));
        }
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= n || c >= n) {
            return Err(Error::InvalidStructure(format!(
                "triplet ({r}, {c}) outside {n} x {n}"
            )));
        }
        // Stable sort keeps duplicates in input order so their sum is reproducible.
        triplets.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_offsets = vec![0usize; n + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
        }
        for row in 0..n {
            row_offsets[row + 1] += row_offsets[row];
        }
        Self::from_csr(n, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        Self::from_csr(n, (0..=n).collect(), (0..n).collect(), diag.to_vec())
    }

    /// Converts a dense row-major square matrix, dropping exact zeros.
    pub fn from_dense_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            check_len(n, row.len())?;
            for (j, &value) in row.iter().enumerate() {
                if value != 0.0 {
                    triplets.push((i, j, value));
                }
            }
        }
        Self::from_triplets(n, triplets)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values stored in `row`.
    pub fn row(&self, row: usize) -> (&[usize], &[f64]) {
        let range = self.row_offsets[row]..self.row_offsets[row + 1];
        (&self.col_indices[range.clone()], &self.values[range])
    }

    /// Stored value at `(row, col)`, or zero when the entry is structurally absent.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (cols, vals) = self.row(row);
        match cols.binary_search(&col) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Dot product of row `row` with `f`, accumulated in column order.
    #[inline]
    pub fn row_dot(&self, row: usize, f: &[f64]) -> f64 {
        let (cols, vals) = self.row(row);
        let mut acc = 0.0;
        for (&c, &a) in cols.iter().zip(vals) {
            acc += a * f[c];
        }
        acc
    }

    /// Full product `A f`.
    pub fn matvec(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, f.len())?;
        let mut out = vec![0.0; self.n];
        self.matvec_into(f, &mut out);
        Ok(out)
    }

    /// Full product into a preallocated buffer; lengths must already agree.
    pub(crate) fn matvec_into(&self, f: &[f64], out: &mut [f64]) {
        for (row, y) in out.iter_mut().enumerate() {
            *y = self.row_dot(row, f);
        }
    }

    /// Structural and numerical symmetry check over every stored entry.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|row| {
            let (cols, vals) = self.row(row);
            cols.iter()
                .zip(vals)
                .all(|(&col, &value)| self.get(col, row) == value)
        })
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|row| self.row(row).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Dense row-major copy, mainly for oracles and tests.
    pub fn to_dense_rows(&self) -> Vec<Vec<f64>> {
        let mut rows = vec![vec![0.0; self.n]; self.n];
        for (i, row) in rows.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_matvec(rows: &[Vec<f64>], f: &[f64]) -> Vec<f64> {
        rows.iter()
            .map(|r| r.iter().zip(f).map(|(a, b)| a * b).sum())
            .collect()
    }

    #[test]
    fn identity_times_vector() {
        let a = SparseMatrix::identity(3).unwrap();
        assert_eq!(a.matvec(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn diagonal_times_ones() {
        let a = SparseMatrix::from_diagonal(&[2.0, 2.0]).unwrap();
        assert_eq!(a.matvec(&[1.0, 1.0]).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn matvec_rejects_wrong_length() {
        let a = SparseMatrix::identity(3).unwrap();
        assert!(matches!(
            a.matvec(&[1.0, 2.0]),
            Err(Error::DimensionMismatch {
                expected: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let a = SparseMatrix::from_triplets(
            2,
            vec![(1, 1, 1.0), (0, 1, 2.0), (1, 1, 0.5), (0, 0, 3.0)],
        )
        .unwrap();
        assert_eq!(a.row_offsets(), &[0, 2, 3]);
        assert_eq!(a.col_indices(), &[0, 1, 1]);
        assert_eq!(a.values(), &[3.0, 2.0, 1.5]);
    }

    #[test]
    fn csr_validation_catches_bad_structure() {
        assert!(SparseMatrix::from_csr(2, vec![0, 1, 2], vec![1, 0], vec![1.0, 1.0]).is_ok());
        assert!(SparseMatrix::from_csr(2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::from_csr(2, vec![0, 1, 2], vec![0, 2], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::from_csr(2, vec![0, 1], vec![0], vec![1.0]).is_err());
        assert!(SparseMatrix::from_csr(0, vec![0], vec![], vec![]).is_err());
    }

    #[test]
    fn laplacian_2_times_ones_matches_dense() {
        let a = crate::laplacian::gen_laplacian_3d(2).unwrap();
        let ones = vec![1.0; 8];
        let expected = dense_matvec(&a.to_dense_rows(), &ones);
        assert_eq!(a.matvec(&ones).unwrap(), expected);
        // Corner nodes: 6 - 3 = 3.
        assert!(expected.iter().all(|&y| y == 3.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn small_matrix() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
            (1usize..=64).prop_flat_map(|n| {
                (
                    proptest::collection::vec(
                        proptest::collection::vec(
                            prop_oneof![3 => Just(0.0), 1 => -10.0..10.0f64],
                            n,
                        ),
                        n,
                    ),
                    proptest::collection::vec(-10.0..10.0f64, n),
                )
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn matvec_agrees_with_dense((rows, f) in small_matrix()) {
                let a = SparseMatrix::from_dense_rows(&rows).unwrap();
                let y = a.matvec(&f).unwrap();
                let want = dense_matvec(&rows, &f);
                let f_inf = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let bound = 1e-13 * a.norm_inf().max(1.0) * f_inf.max(1.0);
                for (got, want) in y.iter().zip(&want) {
                    prop_assert!((got - want).abs() <= bound);
                }
            }
        }
    }
}
