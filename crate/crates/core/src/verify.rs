//! Small-scale property checks of the straggler model against the exact
//! expectation oracles. Used by the `verify` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseMatrix;
use crate::error::Result;
use crate::oracle::{
    closed_form_mean, enumerate_mean_chebyshev, enumerate_mean_iterate, exact_mean_chebyshev,
    exact_mean_iterate, expected_iteration_matrix, expected_perturbation, perturbation_closed_form,
};
use crate::solvers::{
    chebyshev_classical, chebyshev_coeffs, richardson_classical, ChebyshevParams, RichardsonParams,
};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, worst: f64, tol: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: worst <= tol,
        detail: format!("max deviation {worst:.3e} (tolerance {tol:.0e})"),
    }
}

fn max_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Random dense matrix with entries in `[-1, 1)`.
pub fn random_matrix(n: usize, rng: &mut impl Rng) -> DenseMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    DenseMatrix::from_rows(&rows).expect("square")
}

/// Random SPD matrix `B B^T + n I`.
pub fn random_spd(n: usize, rng: &mut impl Rng) -> DenseMatrix {
    let b = random_matrix(n, rng);
    let mut out = DenseMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let s: f64 = b.row(i).iter().zip(b.row(j)).map(|(p, q)| p * q).sum();
            out[(i, j)] = s + if i == j { n as f64 } else { 0.0 };
        }
    }
    out
}

fn to_sparse(a: &DenseMatrix) -> SparseMatrix {
    let rows: Vec<Vec<f64>> = (0..a.n()).map(|i| a.row(i).to_vec()).collect();
    SparseMatrix::from_dense_rows(&rows).expect("square")
}

/// `2 / (lambda_min + lambda_max)` for the enclosure of `B B^T + n I`:
/// the spectrum lies in `[n, n + ||B||_F^2]`.
fn safe_step(a: &DenseMatrix) -> f64 {
    let n = a.n() as f64;
    let trace: f64 = (0..a.n()).map(|i| a[(i, i)]).sum();
    2.0 / (n + trace)
}

/// Enumeration average of `omega_hat (I - D_T) A` against `((n - t)/n) omega_hat A`.
pub fn check_perturbation(seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for n in 2..=6 {
        for t in 1..=n {
            for _ in 0..20 {
                let a = random_matrix(n, &mut rng);
                let omega_hat = rng.random_range(0.1..2.0);
                let e = expected_perturbation(&a, omega_hat, t)?;
                worst =
                    worst.max(e.max_abs_diff(&perturbation_closed_form(&a, omega_hat, t as f64)));
            }
        }
    }
    Ok(outcome("expected perturbation", worst, 1e-13))
}

/// Enumeration average of `I - (n/t) omega D_T A` against `I - omega A`.
pub fn check_unbiased_iteration_matrix(seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for n in 2..=6 {
        for t in 1..=n {
            for _ in 0..20 {
                let a = random_matrix(n, &mut rng);
                let omega = rng.random_range(0.1..1.0);
                let e = expected_iteration_matrix(&a, n as f64 / t as f64 * omega, t)?;
                worst = worst.max(e.max_abs_diff(&a.identity_minus(omega)));
            }
        }
    }
    Ok(outcome("unbiased iteration matrix", worst, 1e-13))
}

fn small_grid() -> Vec<(usize, usize, usize)> {
    // (n, t, m) with at most SEQUENCE_CAP mask sequences.
    vec![
        (3, 1, 3),
        (3, 2, 3),
        (4, 2, 3),
        (4, 3, 3),
        (5, 2, 3),
        (5, 4, 3),
        (6, 3, 3),
        (7, 5, 3),
        (8, 7, 3),
        (8, 4, 2),
    ]
}

/// Sequence-enumeration mean of corrected Richardson against the classical
/// iterate, and against the expectation recurrence.
pub fn check_richardson_mean(seed: u64) -> Result<[CheckOutcome; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut vs_classical, mut vs_recurrence): (f64, f64) = (0.0, 0.0);
    for (n, t, m) in small_grid() {
        let a = random_spd(n, &mut rng);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let omega = safe_step(&a);
        let omega_hat = n as f64 / t as f64 * omega;
        let enumerated = enumerate_mean_iterate(&a, &v, &z0, omega, omega_hat, t, m)?;
        let recurrence = exact_mean_iterate(&a, &v, &z0, omega, omega_hat, t, m)?;
        let params = RichardsonParams::new(omega, m, z0.clone());
        let classical = richardson_classical(&to_sparse(&a), &v, &params, &[])?;
        vs_classical = vs_classical.max(max_diff(&enumerated, &classical.last));
        vs_recurrence = vs_recurrence.max(max_diff(&enumerated, &recurrence));
    }
    Ok([
        outcome(
            "Richardson mean equals classical iterate",
            vs_classical,
            1e-12,
        ),
        outcome(
            "Richardson recurrence equals enumeration",
            vs_recurrence,
            1e-13,
        ),
    ])
}

/// Chebyshev analogue of [`check_richardson_mean`] with `z_{-1} = z_0`.
pub fn check_chebyshev_mean(seed: u64) -> Result<[CheckOutcome; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut vs_classical, mut vs_recurrence): (f64, f64) = (0.0, 0.0);
    for (n, t, m) in small_grid() {
        let a = random_spd(n, &mut rng);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
        let coeffs = chebyshev_coeffs(n as f64, trace + n as f64)?;
        let nu_hat = n as f64 / t as f64 * coeffs.nu;
        let d0 = (z0.as_slice(), z0.as_slice());
        let enumerated = enumerate_mean_chebyshev(&a, &v, coeffs.eta, coeffs.nu, nu_hat, t, m, d0)?;
        let recurrence = exact_mean_chebyshev(&a, &v, coeffs.eta, coeffs.nu, nu_hat, t, m, d0)?;
        let params = ChebyshevParams::new(coeffs, m, z0.clone());
        let classical = chebyshev_classical(&to_sparse(&a), &v, &params, &[])?;
        let prev = classical.previous.expect("Chebyshev trace keeps z_{m-1}");
        vs_classical = vs_classical
            .max(max_diff(&enumerated.0, &classical.last))
            .max(max_diff(&enumerated.1, &prev));
        vs_recurrence = vs_recurrence
            .max(max_diff(&enumerated.0, &recurrence.0))
            .max(max_diff(&enumerated.1, &recurrence.1));
    }
    Ok([
        outcome(
            "Chebyshev mean equals classical iterate",
            vs_classical,
            1e-12,
        ),
        outcome(
            "Chebyshev recurrence equals enumeration",
            vs_recurrence,
            1e-13,
        ),
    ])
}

/// Closed-form mean from `z_0 = omega v` against the expectation recurrence.
pub fn check_closed_form(seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = rng.random_range(3..=8);
        let t = rng.random_range(1..=n);
        let a = random_spd(n, &mut rng);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let omega = safe_step(&a);
        let omega_hat = n as f64 / t as f64 * omega;
        let z0: Vec<f64> = v.iter().map(|x| omega * x).collect();
        for m in 1..=50 {
            let closed = closed_form_mean(&a, &v, omega, omega_hat, t as f64, m)?;
            let rec = exact_mean_iterate(&a, &v, &z0, omega, omega_hat, t, m)?;
            let scale = rec.iter().fold(1.0f64, |s, x| s.max(x.abs()));
            worst = worst.max(max_diff(&closed, &rec) / scale);
        }
    }
    Ok(outcome("closed-form mean equals recurrence", worst, 1e-12))
}

/// Runs every check.
pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = vec![
        check_perturbation(seed)?,
        check_unbiased_iteration_matrix(seed)?,
    ];
    out.extend(check_richardson_mean(seed)?);
    out.extend(check_chebyshev_mean(seed)?);
    out.push(check_closed_form(seed)?);
    Ok(out)
}
