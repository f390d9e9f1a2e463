//! Power-iteration bounds and derived step sizes against a dense symmetric
//! eigensolver.

use nalgebra::DMatrix;
use proptest::prelude::*;

use straggler_core::laplacian::{gen_laplacian_1d, gen_laplacian_3d};
use straggler_core::solvers::{chebyshev_coeffs, omega_cr};
use straggler_core::spectral::{estimate_bounds, SpectralBounds};
use straggler_core::SparseMatrix;

fn dense_eigenvalues(a: &SparseMatrix) -> Vec<f64> {
    let rows = a.to_dense_rows();
    let n = a.n();
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let mut eig: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig
}

#[test]
fn laplacian_4_cubed_bounds() {
    let a = gen_laplacian_3d(4).unwrap();
    let eig = dense_eigenvalues(&a);
    let b = estimate_bounds(&a, 1e-8, 20_000).unwrap();
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    assert!((b.lambda_min - lo).abs() / lo < 1e-6, "{b:?} vs {lo}");
    assert!((b.lambda_max - hi).abs() / hi < 1e-6, "{b:?} vs {hi}");
}

#[test]
fn omega_cr_minimises_spectral_radius() {
    let a = gen_laplacian_1d(12).unwrap();
    let eig = dense_eigenvalues(&a);
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    let omega = omega_cr(&SpectralBounds::new(lo, hi).unwrap()).unwrap();
    let radius = |w: f64| eig.iter().map(|l| (1.0 - w * l).abs()).fold(0.0, f64::max);
    let best = radius(omega);
    assert!((best - (hi - lo) / (hi + lo)).abs() < 1e-12);
    for s in [0.9, 0.99, 1.01, 1.1] {
        assert!(radius(s * omega) > best);
    }
}

#[test]
fn omega_cr_examples() {
    let b = SpectralBounds::new(1.0, 3.0).unwrap();
    assert_eq!(omega_cr(&b).unwrap(), 0.5);
    let a = SparseMatrix::from_diagonal(&[1.0, 2.0, 3.0]).unwrap();
    let est = estimate_bounds(&a, 1e-10, 20_000).unwrap();
    assert!((omega_cr(&est).unwrap() - 0.5).abs() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimated_bounds_enclose_dense_spectrum(
        diag in proptest::collection::vec(1.0..10.0f64, 3..9),
        off in proptest::collection::vec(-0.4..0.4f64, 8),
    ) {
        // Diagonally dominant symmetric tridiagonal matrices are SPD.
        let n = diag.len();
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            rows[i][i] = diag[i];
            if i + 1 < n {
                rows[i][i + 1] = off[i];
                rows[i + 1][i] = off[i];
            }
        }
        let a = SparseMatrix::from_dense_rows(&rows).unwrap();
        let eig = dense_eigenvalues(&a);
        let b = estimate_bounds(&a, 1e-10, 200_000).unwrap();
        let (lo, hi) = (eig[0], eig[n - 1]);
        prop_assert!((b.lambda_max - hi).abs() <= 1e-6 * hi);
        prop_assert!((b.lambda_min - lo).abs() <= 1e-6 * hi);
        let c = chebyshev_coeffs(0.9 * b.lambda_min, 1.1 * b.lambda_max);
        prop_assert!(c.is_ok());
    }
}
