//! Extreme-eigenvalue estimates for symmetric positive definite operators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Enclosure `[lambda_min, lambda_max]` of the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBounds {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl SpectralBounds {
    pub fn new(lambda_min: f64, lambda_max: f64) -> Result<Self> {
        if !(lambda_min.is_finite() && lambda_max.is_finite()) {
            return Err(Error::InvalidArgument(
                "spectral bounds must be finite".into(),
            ));
        }
        if lambda_min <= 0.0 || lambda_min > lambda_max {
            return Err(Error::InvalidArgument(format!(
                "spectral bounds [{lambda_min}, {lambda_max}] are not an SPD enclosure"
            )));
        }
        Ok(Self {
            lambda_min,
            lambda_max,
        })
    }

    pub fn condition_number(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    /// Relative eigen-residual `||B x - theta x|| <= tol * |theta|` at which to stop.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed for the start vector.
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20_000,
            seed: 0,
        }
    }
}

/// Estimates both extreme eigenvalues with default seed.
pub fn estimate_bounds(a: &SparseMatrix, tol: f64, max_iter: usize) -> Result<SpectralBounds> {
    estimate_bounds_with(
        a,
        &PowerOptions {
            tol,
            max_iter,
            ..PowerOptions::default()
        },
    )
}

/// Power iteration on `A` for `lambda_max`, then on `sigma I - A` with
/// `sigma = lambda_max (1 + tol)` for `lambda_min`.
pub fn estimate_bounds_with(a: &SparseMatrix, opts: &PowerOptions) -> Result<SpectralBounds> {
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tol = {} outside (0, 1)",
            opts.tol
        )));
    }
    spot_check_symmetry(a)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start: Vec<f64> = (0..a.n()).map(|_| rng.random_range(-1.0..1.0)).collect();

    let lambda_max = power_iteration(
        a.n(),
        &start,
        opts,
        "power iteration for lambda_max",
        |x, y| a.matvec_into(x, y),
    )?;
    if lambda_max <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "largest eigenvalue estimate {lambda_max} is not positive"
        )));
    }
    let sigma = lambda_max * (1.0 + opts.tol);
    let shifted_top = power_iteration(
        a.n(),
        &start,
        opts,
        "shifted power iteration for lambda_min",
        |x, y| {
            a.matvec_into(x, y);
            for (yi, xi) in y.iter_mut().zip(x) {
                *yi = sigma * xi - *yi;
            }
        },
    )?;
    let lambda_min = sigma - shifted_top;
    if lambda_min <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "smallest eigenvalue estimate {lambda_min:e} is not positive; matrix is not SPD"
        )));
    }
    Ok(SpectralBounds {
        lambda_min: lambda_min.min(lambda_max),
        lambda_max,
    })
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Rayleigh-quotient power iteration; stops on relative eigen-residual.
fn power_iteration(
    n: usize,
    start: &[f64],
    opts: &PowerOptions,
    what: &'static str,
    apply: impl Fn(&[f64], &mut [f64]),
) -> Result<f64> {
    let mut x = start.to_vec();
    let s = norm(&x);
    x.iter_mut().for_each(|v| *v /= s);
    let mut y = vec![0.0; n];
    let mut theta = 0.0;
    for _ in 0..opts.max_iter {
        apply(&x, &mut y);
        theta = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
        let residual = x
            .iter()
            .zip(&y)
            .map(|(xi, yi)| (yi - theta * xi).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= opts.tol * theta.abs() {
            return Ok(theta);
        }
        let ny = norm(&y);
        if ny == 0.0 {
            return Ok(0.0);
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
    }
    Err(Error::NoConvergence {
        what,
        iterations: opts.max_iter,
        estimate: theta,
    })
}

/// Compares up to 1024 evenly spaced stored entries with their transposes.
fn spot_check_symmetry(a: &SparseMatrix) -> Result<()> {
    let nnz = a.nnz();
    if nnz == 0 {
        return Ok(());
    }
    let samples = nnz.min(1024);
    let offsets = a.row_offsets();
    for s in 0..samples {
        let k = s * nnz / samples;
        let row = offsets.partition_point(|&o| o <= k) - 1;
        let col = a.col_indices()[k];
        let v = a.values()[k];
        let w = a.get(col, row);
        if (v - w).abs() > 1e-12 * v.abs().max(w.abs()) {
            return Err(Error::NotSymmetric { row, col });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplacian::gen_laplacian_3d;

    #[test]
    fn diagonal_matrix() {
        let a = SparseMatrix::from_diagonal(&[1.0, 2.0, 3.0]).unwrap();
        let b = estimate_bounds(&a, 1e-8, 20_000).unwrap();
        assert!((b.lambda_min - 1.0).abs() < 1e-7);
        assert!((b.lambda_max - 3.0).abs() < 1e-7);
    }

    #[test]
    fn identity_has_equal_bounds() {
        let a = SparseMatrix::identity(5).unwrap();
        let b = estimate_bounds(&a, 1e-8, 20_000).unwrap();
        assert!((b.lambda_min - 1.0).abs() < 1e-12);
        assert!((b.lambda_max - 1.0).abs() < 1e-12);
        assert!(b.lambda_min <= b.lambda_max);
    }

    #[test]
    fn nonsymmetric_rejected() {
        let a = SparseMatrix::from_dense_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert!(matches!(
            estimate_bounds(&a, 1e-8, 100),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn non_convergence_reports_estimate() {
        let a = gen_laplacian_3d(6).unwrap();
        match estimate_bounds(&a, 1e-12, 3) {
            Err(Error::NoConvergence {
                iterations,
                estimate,
                ..
            }) => {
                assert_eq!(iterations, 3);
                assert!(estimate > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn laplacian_matches_closed_form() {
        for k in [2, 4, 6] {
            let a = gen_laplacian_3d(k).unwrap();
            let b = estimate_bounds(&a, 1e-8, 20_000).unwrap();
            let (lo, hi) = crate::laplacian::laplacian_3d_extreme_eigenvalues(k);
            assert!(
                (b.lambda_min - lo).abs() / lo < 1e-6,
                "k={k}: {b:?} vs {lo}"
            );
            assert!(
                (b.lambda_max - hi).abs() / hi < 1e-6,
                "k={k}: {b:?} vs {hi}"
            );
        }
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(SpectralBounds::new(0.0, 1.0).is_err());
        assert!(SpectralBounds::new(2.0, 1.0).is_err());
        assert!(SpectralBounds::new(1.0, f64::INFINITY).is_err());
        assert!(SpectralBounds::new(1.0, 1.0).is_ok());
    }
}
