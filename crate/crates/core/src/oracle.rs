//! Exact reference computations for the expectations of the straggler-tolerant
//! iterations, for small dense problems.
//!
//! Two independent routes are provided for every expectation:
//!
//! * expectation recurrences, which use `E[D_T A] = (t / n) A` and the
//!   independence of the row sets drawn at different iterations;
//! * brute-force enumeration over every row subset (and, for iterates, every
//!   sequence of row subsets), which uses neither fact.
//!
//! All oracles work with a fixed number `t` of returned rows. When `T` itself
//! is random, the one-step expectation is the `pmf`-weighted sum of fixed-`t`
//! expectations ([`expected_perturbation_mixture`]); because draws at different
//! iterations are independent, iterate means only depend on `E[T]`
//! ([`mean_iterate_for`]).

use crate::dense::DenseMatrix;
use crate::error::{check_len, Error, Result};
use crate::straggle::{RowMask, StraggleDistribution};

/// Largest dimension for which row subsets are enumerated.
pub const MASK_ENUMERATION_MAX_N: usize = 20;

/// Largest number of mask sequences visited by the sequence enumerations.
pub const SEQUENCE_CAP: u128 = 1_000_000;

/// `C(n, k)` in exact integer arithmetic.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Every `t`-subset of `{0, .., n-1}` in lexicographic order.
pub fn enumerate_masks(n: usize, t: usize) -> Result<Vec<RowMask>> {
    if n > MASK_ENUMERATION_MAX_N {
        return Err(Error::CapExceeded {
            count: n as u128,
            cap: MASK_ENUMERATION_MAX_N as u128,
        });
    }
    if t == 0 || t > n {
        return Err(Error::InvalidArgument(format!("t = {t} outside [1, {n}]")));
    }
    let mut out = Vec::with_capacity(binomial(n, t) as usize);
    let mut combo: Vec<usize> = (0..t).collect();
    loop {
        out.push(RowMask::new(combo.clone(), n)?);
        // Advance the rightmost index that still has room.
        let Some(pos) = (0..t).rev().find(|&i| combo[i] < n - t + i) else {
            break;
        };
        combo[pos] += 1;
        for i in pos + 1..t {
            combo[i] = combo[i - 1] + 1;
        }
    }
    Ok(out)
}

fn check_t(a: &DenseMatrix, t: usize) -> Result<()> {
    if t == 0 || t > a.n() {
        return Err(Error::InvalidArgument(format!(
            "t = {t} outside [1, {}]",
            a.n()
        )));
    }
    Ok(())
}

/// `E[omega_hat (I - D_T) A]` over all `t`-subsets, by enumeration.
pub fn expected_perturbation(a: &DenseMatrix, omega_hat: f64, t: usize) -> Result<DenseMatrix> {
    check_t(a, t)?;
    let n = a.n();
    let masks = enumerate_masks(n, t)?;
    let mut sum = DenseMatrix::zeros(n);
    for mask in &masks {
        for i in (0..n).filter(|&i| !mask.contains(i)) {
            for j in 0..n {
                sum[(i, j)] += omega_hat * a[(i, j)];
            }
        }
    }
    let mean = sum.scaled(1.0 / masks.len() as f64);
    debug_assert!({
        let closed = perturbation_closed_form(a, omega_hat, t as f64);
        let scale = a
            .row(0)
            .iter()
            .fold(1.0f64, |m, v| m.max((omega_hat * v).abs()));
        mean.max_abs_diff(&closed) <= 1e-12 * scale.max(1.0)
    });
    Ok(mean)
}

/// `((n - E[T]) / n) omega_hat A`.
pub fn perturbation_closed_form(a: &DenseMatrix, omega_hat: f64, expected_t: f64) -> DenseMatrix {
    let n = a.n() as f64;
    a.scaled((n - expected_t) / n * omega_hat)
}

/// `E[omega_hat (I - D_T) A]` when `T` follows `dist`: the `pmf`-weighted sum
/// of the fixed-`t` enumerations.
pub fn expected_perturbation_mixture(
    a: &DenseMatrix,
    omega_hat: f64,
    dist: &StraggleDistribution,
) -> Result<DenseMatrix> {
    if dist.n() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: dist.n(),
        });
    }
    let mut out = DenseMatrix::zeros(a.n());
    for (t, p) in dist.pmf() {
        out = out.add_scaled(&expected_perturbation(a, omega_hat, t)?, p);
    }
    Ok(out)
}

/// `E[I - omega_hat D_T A]` over all `t`-subsets, by enumeration.
pub fn expected_iteration_matrix(a: &DenseMatrix, omega_hat: f64, t: usize) -> Result<DenseMatrix> {
    check_t(a, t)?;
    let n = a.n();
    let masks = enumerate_masks(n, t)?;
    let mut sum = DenseMatrix::zeros(n);
    for mask in &masks {
        for i in 0..n {
            sum[(i, i)] += 1.0;
        }
        for &i in mask.indices() {
            for j in 0..n {
                sum[(i, j)] -= omega_hat * a[(i, j)];
            }
        }
    }
    Ok(sum.scaled(1.0 / masks.len() as f64))
}

fn row_dot(a: &DenseMatrix, i: usize, x: &[f64]) -> f64 {
    a.row(i).iter().zip(x).map(|(p, q)| p * q).sum()
}

/// `x <- (x - s A x) + w`, with the same grouping as the solvers.
fn damped_step(a: &DenseMatrix, x: &[f64], s: f64, w: &[f64]) -> Vec<f64> {
    (0..a.n())
        .map(|i| (x[i] - s * row_dot(a, i, x)) + w[i])
        .collect()
}

fn check_vectors(a: &DenseMatrix, vs: &[&[f64]]) -> Result<()> {
    vs.iter().try_for_each(|v| check_len(a.n(), v.len()))
}

/// Exact `E[z_m]` of straggler-tolerant Richardson with exactly `t` rows per
/// product: `mu_i = (I - (t/n) omega_hat A) mu_{i-1} + omega v`, `mu_0 = z0`.
pub fn exact_mean_iterate(
    a: &DenseMatrix,
    v: &[f64],
    z0: &[f64],
    omega: f64,
    omega_hat: f64,
    t: usize,
    m: usize,
) -> Result<Vec<f64>> {
    check_t(a, t)?;
    mean_iterate_with_ratio(a, v, z0, omega, omega_hat, t as f64 / a.n() as f64, m)
}

/// Exact `E[z_m]` when `T` follows `dist` independently at every iteration.
pub fn mean_iterate_for(
    a: &DenseMatrix,
    v: &[f64],
    z0: &[f64],
    omega: f64,
    omega_hat: f64,
    dist: &StraggleDistribution,
    m: usize,
) -> Result<Vec<f64>> {
    if dist.n() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: dist.n(),
        });
    }
    mean_iterate_with_ratio(a, v, z0, omega, omega_hat, dist.tau(), m)
}

fn mean_iterate_with_ratio(
    a: &DenseMatrix,
    v: &[f64],
    z0: &[f64],
    omega: f64,
    omega_hat: f64,
    ratio: f64,
    m: usize,
) -> Result<Vec<f64>> {
    check_vectors(a, &[v, z0])?;
    let s = ratio * omega_hat;
    let w: Vec<f64> = v.iter().map(|x| omega * x).collect();
    let mut mu = z0.to_vec();
    for _ in 0..m {
        mu = damped_step(a, &mu, s, &w);
    }
    Ok(mu)
}

/// Entry-wise Neumaier-compensated running sum.
struct CompensatedSum {
    sum: Vec<f64>,
    carry: Vec<f64>,
}

impl CompensatedSum {
    fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            carry: vec![0.0; n],
        }
    }

    fn add(&mut self, x: &[f64]) {
        for ((s, c), &xi) in self.sum.iter_mut().zip(&mut self.carry).zip(x) {
            let t = *s + xi;
            *c += if s.abs() >= xi.abs() {
                (*s - t) + xi
            } else {
                (xi - t) + *s
            };
            *s = t;
        }
    }

    fn mean(&self, count: u128) -> Vec<f64> {
        self.sum
            .iter()
            .zip(&self.carry)
            .map(|(s, c)| (s + c) / count as f64)
            .collect()
    }
}

fn sequence_count(n: usize, t: usize, m: usize) -> Result<u128> {
    let per_step = binomial(n, t);
    let mut count: u128 = 1;
    for _ in 0..m {
        count = count.saturating_mul(per_step);
        if count > SEQUENCE_CAP {
            return Err(Error::CapExceeded {
                count,
                cap: SEQUENCE_CAP,
            });
        }
    }
    Ok(count)
}

/// Average of `z_m` over every sequence of `m` row subsets of size `t`, each
/// step evaluated as `z - omega_hat D_T A z + omega v`. Sequences are visited
/// in lexicographic order and summed with compensation. Capped at
/// [`SEQUENCE_CAP`] sequences.
pub fn enumerate_mean_iterate(
    a: &DenseMatrix,
    v: &[f64],
    z0: &[f64],
    omega: f64,
    omega_hat: f64,
    t: usize,
    m: usize,
) -> Result<Vec<f64>> {
    check_t(a, t)?;
    check_vectors(a, &[v, z0])?;
    let count = sequence_count(a.n(), t, m)?;
    let masks = enumerate_masks(a.n(), t)?;
    let w: Vec<f64> = v.iter().map(|x| omega * x).collect();

    fn visit(
        a: &DenseMatrix,
        masks: &[RowMask],
        w: &[f64],
        omega_hat: f64,
        z: &[f64],
        depth: usize,
        sum: &mut CompensatedSum,
    ) {
        if depth == 0 {
            sum.add(z);
            return;
        }
        for mask in masks {
            let mut next = z.to_vec();
            for &i in mask.indices() {
                next[i] = z[i] - omega_hat * row_dot(a, i, z);
            }
            for (ni, wi) in next.iter_mut().zip(w) {
                *ni += wi;
            }
            visit(a, masks, w, omega_hat, &next, depth - 1, sum);
        }
    }

    let mut sum = CompensatedSum::new(a.n());
    visit(a, &masks, &w, omega_hat, z0, m, &mut sum);
    Ok(sum.mean(count))
}

/// `omega ((E[T]/N) omega_hat A)^{-1} (I - (I - (E[T]/N) omega_hat A)^{m+1}) v`,
/// the mean of straggler-tolerant Richardson started from `omega v`.
pub fn closed_form_mean(
    a: &DenseMatrix,
    v: &[f64],
    omega: f64,
    omega_hat: f64,
    expected_t: f64,
    m: usize,
) -> Result<Vec<f64>> {
    check_vectors(a, &[v])?;
    let s = expected_t / a.n() as f64 * omega_hat;
    let scaled = a.scaled(s);
    // u = (I - sA)^{m+1} v
    let zero = vec![0.0; a.n()];
    let mut u = v.to_vec();
    for _ in 0..=m {
        u = damped_step(a, &u, s, &zero);
    }
    let rhs: Vec<f64> = v.iter().zip(&u).map(|(vi, ui)| vi - ui).collect();
    let x = scaled.solve(&rhs)?;
    Ok(x.into_iter().map(|xi| omega * xi).collect())
}

/// Exact `E[(z_m, z_{m-1})]` of straggler-tolerant Chebyshev with exactly `t`
/// rows per product, via the expectation of the block recurrence.
#[allow(clippy::too_many_arguments)]
pub fn exact_mean_chebyshev(
    a: &DenseMatrix,
    v: &[f64],
    eta: f64,
    nu: f64,
    nu_hat: f64,
    t: usize,
    m: usize,
    d0: (&[f64], &[f64]),
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_t(a, t)?;
    let (z0, z_minus1) = d0;
    check_vectors(a, &[v, z0, z_minus1])?;
    let s = t as f64 / a.n() as f64 * nu_hat;
    let w: Vec<f64> = v.iter().map(|x| nu * x).collect();
    let mut cur = z0.to_vec();
    let mut prev = z_minus1.to_vec();
    for _ in 0..m {
        let next: Vec<f64> = (0..a.n())
            .map(|i| ((cur[i] - s * row_dot(a, i, &cur)) + w[i]) + eta * (cur[i] - prev[i]))
            .collect();
        prev = std::mem::replace(&mut cur, next);
    }
    Ok((cur, prev))
}

/// Average of `(z_m, z_{m-1})` over every sequence of `m` row subsets for
/// straggler-tolerant Chebyshev. Capped at [`SEQUENCE_CAP`] sequences.
#[allow(clippy::too_many_arguments)]
pub fn enumerate_mean_chebyshev(
    a: &DenseMatrix,
    v: &[f64],
    eta: f64,
    nu: f64,
    nu_hat: f64,
    t: usize,
    m: usize,
    d0: (&[f64], &[f64]),
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_t(a, t)?;
    let (z0, z_minus1) = d0;
    check_vectors(a, &[v, z0, z_minus1])?;
    let count = sequence_count(a.n(), t, m)?;
    let masks = enumerate_masks(a.n(), t)?;
    let w: Vec<f64> = v.iter().map(|x| nu * x).collect();

    struct Ctx<'a> {
        a: &'a DenseMatrix,
        masks: &'a [RowMask],
        w: &'a [f64],
        eta: f64,
        nu_hat: f64,
    }

    fn visit(
        ctx: &Ctx,
        cur: &[f64],
        prev: &[f64],
        depth: usize,
        sum: &mut (CompensatedSum, CompensatedSum),
    ) {
        if depth == 0 {
            sum.0.add(cur);
            sum.1.add(prev);
            return;
        }
        for mask in ctx.masks {
            let mut y = vec![0.0; cur.len()];
            for &i in mask.indices() {
                y[i] = row_dot(ctx.a, i, cur);
            }
            let next: Vec<f64> = (0..cur.len())
                .map(|i| ((cur[i] - ctx.nu_hat * y[i]) + ctx.w[i]) + ctx.eta * (cur[i] - prev[i]))
                .collect();
            visit(ctx, &next, cur, depth - 1, sum);
        }
    }

    let ctx = Ctx {
        a,
        masks: &masks,
        w: &w,
        eta,
        nu_hat,
    };
    let mut sum = (CompensatedSum::new(a.n()), CompensatedSum::new(a.n()));
    visit(&ctx, z0, z_minus1, m, &mut sum);
    Ok((sum.0.mean(count), sum.1.mean(count)))
}

/// `E[F_m] = sum_{j=1}^{m} (I - (E[T]/N) omega_hat A)^j`.
pub fn expected_fm(
    a: &DenseMatrix,
    omega_hat: f64,
    expected_t: f64,
    m: usize,
) -> Result<DenseMatrix> {
    if m == 0 {
        return Err(Error::InvalidArgument("E[F_m] needs m >= 1".into()));
    }
    let base = a.identity_minus(expected_t / a.n() as f64 * omega_hat);
    let mut power = base.clone();
    let mut sum = base.clone();
    for _ in 1..m {
        power = power.matmul(&base);
        sum = sum.add_scaled(&power, 1.0);
    }
    Ok(sum)
}
