//! Classical and straggler-tolerant Richardson and stationary Chebyshev
//! iterations.
//!
//! The straggler-tolerant variants replace the product `A z` by an
//! incomplete product `D_T A z` drawn freshly at every iteration. Iteration
//! `i` (1-based) of a run seeded with `seed` uses the stream
//! `seed.with_iteration(i)`, drawing `T` first and then the row set.
//!
//! Both families share one update kernel, so a straggler run with a full mask
//! and equal step sizes reproduces its classical counterpart bit for bit:
//!
//! * Richardson: `z_i = (z_{i-1} - omega_hat * y) + omega * v`
//! * Chebyshev:  `z_i = ((z_{i-1} - nu_hat * y) + nu * v) + eta * (z_{i-1} - z_{i-2})`
//!
//! where `y` is the (possibly incomplete) product with `z_{i-1}`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::partial::partial_matvec_into;
use crate::sparse::SparseMatrix;
use crate::spectral::SpectralBounds;
use crate::straggle::{sample_iteration, SeedSpec, StraggleDistribution};

/// Smallest accepted relative width `(beta - alpha) / alpha` of a Chebyshev interval.
pub const MIN_RELATIVE_GAP: f64 = 1e-8;

/// Optimal Richardson step `2 / (lambda_min + lambda_max)`.
pub fn omega_cr(bounds: &SpectralBounds) -> Result<f64> {
    if !(bounds.lambda_min > 0.0 && bounds.lambda_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bounds {bounds:?} must be positive"
        )));
    }
    Ok(2.0 / (bounds.lambda_min + bounds.lambda_max))
}

/// Step rescaled by `N / E[T]` so that the sampled product is unbiased.
pub fn corrected_step(step: f64, dist: &StraggleDistribution) -> f64 {
    dist.n() as f64 / dist.expected_t() * step
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevCoefficients {
    pub eta: f64,
    pub nu: f64,
}

/// Fixed coefficients of the stationary Chebyshev iteration for a spectrum
/// enclosed in `[alpha, beta]`: `eta = rho^2`, `nu = 2 rho / delta` with
/// `delta = (alpha + beta) / 2` and `rho = c - sqrt(c^2 - 1)`,
/// `c = (alpha + beta) / (beta - alpha)`.
pub fn chebyshev_coeffs(alpha: f64, beta: f64) -> Result<ChebyshevCoefficients> {
    if !(alpha > 0.0 && alpha < beta && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Chebyshev interval [{alpha}, {beta}] must satisfy 0 < alpha < beta"
        )));
    }
    if (beta - alpha) / alpha < MIN_RELATIVE_GAP {
        return Err(Error::InvalidArgument(format!(
            "Chebyshev interval [{alpha}, {beta}] is narrower than the guarded minimum"
        )));
    }
    let c = (alpha + beta) / (beta - alpha);
    // c - sqrt(c^2 - 1) without cancellation.
    let rho = 1.0 / (c + (c * c - 1.0).sqrt());
    let delta = (alpha + beta) / 2.0;
    Ok(ChebyshevCoefficients {
        eta: rho * rho,
        nu: 2.0 * rho / delta,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RichardsonParams {
    pub omega: f64,
    /// Step applied to the (possibly incomplete) product.
    pub omega_hat: f64,
    pub m: usize,
    pub z0: Vec<f64>,
}

impl RichardsonParams {
    /// Classical parameters: `omega_hat = omega`.
    pub fn new(omega: f64, m: usize, z0: Vec<f64>) -> Self {
        Self {
            omega,
            omega_hat: omega,
            m,
            z0,
        }
    }

    /// `omega_hat = (N / E[T]) omega`.
    pub fn corrected(omega: f64, dist: &StraggleDistribution, m: usize, z0: Vec<f64>) -> Self {
        Self {
            omega_hat: corrected_step(omega, dist),
            ..Self::new(omega, m, z0)
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        check_len(n, self.z0.len())?;
        if !(self.omega.is_finite() && self.omega != 0.0 && self.omega_hat.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "omega = {} must be finite and nonzero",
                self.omega
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevParams {
    pub eta: f64,
    pub nu: f64,
    /// Step applied to the (possibly incomplete) product.
    pub nu_hat: f64,
    pub m: usize,
    pub z0: Vec<f64>,
    pub z_minus1: Vec<f64>,
}

impl ChebyshevParams {
    /// Classical parameters with `nu_hat = nu` and `z_{-1} = z_0`.
    pub fn new(coeffs: ChebyshevCoefficients, m: usize, z0: Vec<f64>) -> Self {
        Self {
            eta: coeffs.eta,
            nu: coeffs.nu,
            nu_hat: coeffs.nu,
            m,
            z_minus1: z0.clone(),
            z0,
        }
    }

    /// `nu_hat = (N / E[T]) nu`.
    pub fn corrected(
        coeffs: ChebyshevCoefficients,
        dist: &StraggleDistribution,
        m: usize,
        z0: Vec<f64>,
    ) -> Self {
        Self {
            nu_hat: corrected_step(coeffs.nu, dist),
            ..Self::new(coeffs, m, z0)
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        check_len(n, self.z0.len())?;
        check_len(n, self.z_minus1.len())?;
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eta = {} must be >= 0",
                self.eta
            )));
        }
        if !(self.nu.is_finite() && self.nu_hat.is_finite()) {
            return Err(Error::InvalidArgument(
                "nu and nu_hat must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Iterates captured during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateTrace {
    /// `(iteration, iterate)` pairs, ascending and deduplicated.
    pub snapshots: Vec<(usize, Vec<f64>)>,
    /// The final iterate `z_m`.
    pub last: Vec<f64>,
    /// `z_{m-1}` for Chebyshev runs (`z_{-1}` when `m = 0`).
    pub previous: Option<Vec<f64>>,
}

impl IterateTrace {
    pub fn snapshot(&self, iteration: usize) -> Option<&[f64]> {
        self.snapshots
            .binary_search_by_key(&iteration, |(i, _)| *i)
            .ok()
            .map(|k| self.snapshots[k].1.as_slice())
    }
}

fn snapshot_plan(snapshots: &[usize], m: usize) -> Result<Vec<usize>> {
    let mut plan = snapshots.to_vec();
    plan.sort_unstable();
    plan.dedup();
    if let Some(&last) = plan.last() {
        if last > m {
            return Err(Error::InvalidArgument(format!(
                "snapshot at iteration {last} requested from a run of {m} iterations"
            )));
        }
    }
    Ok(plan)
}

/// Product strategy for one iteration: fills `y` with (an approximation of) `A z`.
trait Product {
    fn apply(&mut self, iteration: usize, z: &[f64], y: &mut [f64]);
}

struct Exact<'a>(&'a SparseMatrix);

impl Product for Exact<'_> {
    fn apply(&mut self, _iteration: usize, z: &[f64], y: &mut [f64]) {
        self.0.matvec_into(z, y);
    }
}

struct Sampled<'a> {
    a: &'a SparseMatrix,
    dist: &'a StraggleDistribution,
    seed: SeedSpec,
}

impl Product for Sampled<'_> {
    fn apply(&mut self, iteration: usize, z: &[f64], y: &mut [f64]) {
        let mask = sample_iteration(self.dist, self.seed.with_iteration(iteration as u64));
        partial_matvec_into(self.a, z, &mask, y);
    }
}

fn check_system(a: &SparseMatrix, v: &[f64]) -> Result<()> {
    check_len(a.n(), v.len())
}

fn check_dist(a: &SparseMatrix, dist: &StraggleDistribution) -> Result<()> {
    if dist.n() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: dist.n(),
        });
    }
    Ok(())
}

fn richardson_loop(
    a: &SparseMatrix,
    v: &[f64],
    params: &RichardsonParams,
    snapshots: &[usize],
    mut product: impl Product,
) -> Result<IterateTrace> {
    check_system(a, v)?;
    params.validate(a.n())?;
    let plan = snapshot_plan(snapshots, params.m)?;
    let mut next_snapshot = plan.iter().peekable();
    let mut taken = Vec::with_capacity(plan.len());

    let scaled_rhs: Vec<f64> = v.iter().map(|vi| params.omega * vi).collect();
    let mut z = params.z0.clone();
    let mut y = vec![0.0; a.n()];
    if next_snapshot.next_if_eq(&&0).is_some() {
        taken.push((0, z.clone()));
    }
    for i in 1..=params.m {
        product.apply(i, &z, &mut y);
        for ((zi, yi), wi) in z.iter_mut().zip(&y).zip(&scaled_rhs) {
            *zi = (*zi - params.omega_hat * yi) + wi;
        }
        if next_snapshot.next_if_eq(&&i).is_some() {
            taken.push((i, z.clone()));
        }
    }
    Ok(IterateTrace {
        snapshots: taken,
        last: z,
        previous: None,
    })
}

fn chebyshev_loop(
    a: &SparseMatrix,
    v: &[f64],
    params: &ChebyshevParams,
    snapshots: &[usize],
    mut product: impl Product,
) -> Result<IterateTrace> {
    check_system(a, v)?;
    params.validate(a.n())?;
    let plan = snapshot_plan(snapshots, params.m)?;
    let mut next_snapshot = plan.iter().peekable();
    let mut taken = Vec::with_capacity(plan.len());

    let scaled_rhs: Vec<f64> = v.iter().map(|vi| params.nu * vi).collect();
    let mut z = params.z0.clone();
    let mut z_prev = params.z_minus1.clone();
    let mut next = vec![0.0; a.n()];
    let mut y = vec![0.0; a.n()];
    if next_snapshot.next_if_eq(&&0).is_some() {
        taken.push((0, z.clone()));
    }
    for i in 1..=params.m {
        product.apply(i, &z, &mut y);
        for k in 0..z.len() {
            next[k] =
                ((z[k] - params.nu_hat * y[k]) + scaled_rhs[k]) + params.eta * (z[k] - z_prev[k]);
        }
        // (z_prev, z) <- (z, next)
        std::mem::swap(&mut z_prev, &mut z);
        std::mem::swap(&mut z, &mut next);
        if next_snapshot.next_if_eq(&&i).is_some() {
            taken.push((i, z.clone()));
        }
    }
    Ok(IterateTrace {
        snapshots: taken,
        last: z,
        previous: Some(z_prev),
    })
}

/// `z_i = z_{i-1} + omega (v - A z_{i-1})`.
pub fn richardson_classical(
    a: &SparseMatrix,
    v: &[f64],
    params: &RichardsonParams,
    snapshots: &[usize],
) -> Result<IterateTrace> {
    richardson_loop(a, v, params, snapshots, Exact(a))
}

/// `z_i = (I - omega_hat D_{T_i} A) z_{i-1} + omega v` with a fresh row set per iteration.
pub fn richardson_straggler(
    a: &SparseMatrix,
    v: &[f64],
    params: &RichardsonParams,
    dist: &StraggleDistribution,
    seed: SeedSpec,
    snapshots: &[usize],
) -> Result<IterateTrace> {
    check_dist(a, dist)?;
    richardson_loop(a, v, params, snapshots, Sampled { a, dist, seed })
}

/// `z_m = z_{m-1} + eta (z_{m-1} - z_{m-2}) + nu (v - A z_{m-1})`.
pub fn chebyshev_classical(
    a: &SparseMatrix,
    v: &[f64],
    params: &ChebyshevParams,
    snapshots: &[usize],
) -> Result<IterateTrace> {
    chebyshev_loop(a, v, params, snapshots, Exact(a))
}

/// `z_m = z_{m-1} + eta (z_{m-1} - z_{m-2}) + nu v - nu_hat D_{T_m} A z_{m-1}`.
pub fn chebyshev_straggler(
    a: &SparseMatrix,
    v: &[f64],
    params: &ChebyshevParams,
    dist: &StraggleDistribution,
    seed: SeedSpec,
    snapshots: &[usize],
) -> Result<IterateTrace> {
    check_dist(a, dist)?;
    chebyshev_loop(a, v, params, snapshots, Sampled { a, dist, seed })
}

/// Runs classical Chebyshev from `z0` until `||v - A z|| <= rtol ||v||`.
pub fn chebyshev_solve(
    a: &SparseMatrix,
    v: &[f64],
    coeffs: ChebyshevCoefficients,
    z0: Vec<f64>,
    rtol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    check_system(a, v)?;
    check_len(a.n(), z0.len())?;
    let v_norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut z_prev = z0.clone();
    let mut z = z0;
    let mut next = vec![0.0; a.n()];
    let mut y = vec![0.0; a.n()];
    let mut residual = f64::INFINITY;
    for _ in 0..=max_iter {
        a.matvec_into(&z, &mut y);
        residual = y
            .iter()
            .zip(v)
            .map(|(yi, vi)| (vi - yi).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= rtol * v_norm {
            return Ok(z);
        }
        if !residual.is_finite() {
            break;
        }
        for k in 0..z.len() {
            next[k] =
                ((z[k] - coeffs.nu * y[k]) + coeffs.nu * v[k]) + coeffs.eta * (z[k] - z_prev[k]);
        }
        std::mem::swap(&mut z_prev, &mut z);
        std::mem::swap(&mut z, &mut next);
    }
    Err(Error::NoConvergence {
        what: "Chebyshev reference solve",
        iterations: max_iter,
        estimate: residual / v_norm.max(f64::MIN_POSITIVE),
    })
}
