//! Monte-Carlo driver: runs `L` independent straggler-tolerant solves and
//! aggregates per-entry statistics against the classical iterate `z_m` and the
//! solution `z` of `A z = v`.
//!
//! Trials are evaluated in parallel in fixed-size chunks and folded into the
//! running statistics strictly in trial order, so results do not depend on
//! the thread count.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{check_len, Error, Result};
use crate::laplacian::{gen_laplacian_1d, gen_laplacian_3d};
use crate::mtx::load_matrix_market;
use crate::solvers::{
    chebyshev_classical, chebyshev_coeffs, chebyshev_solve, chebyshev_straggler, omega_cr,
    richardson_classical, richardson_straggler, ChebyshevParams, IterateTrace, RichardsonParams,
};
use crate::sparse::SparseMatrix;
use crate::spectral::{estimate_bounds_with, PowerOptions, SpectralBounds};
use crate::straggle::{SeedSpec, StraggleDistribution, StraggleKind, SHARED_TRIAL};

/// Largest dimension for which the reference solution is a dense LU solve.
pub const DENSE_REFERENCE_MAX_N: usize = 2000;

pub const MSE_CONVENTION: &str = "(1/N) sum_i x_i^2";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixSource {
    File { path: PathBuf },
    Laplacian3d { n_per_dim: usize },
    Laplacian1d { n: usize },
}

impl MatrixSource {
    pub fn load(&self) -> Result<SparseMatrix> {
        match self {
            MatrixSource::File { path } => load_matrix_market(path),
            MatrixSource::Laplacian3d { n_per_dim } => gen_laplacian_3d(*n_per_dim),
            MatrixSource::Laplacian1d { n } => gen_laplacian_1d(*n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Richardson,
    Chebyshev,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Richardson => "richardson",
            Method::Chebyshev => "chebyshev",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Classical,
    StragglerCorrected,
    StragglerUncorrected,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Classical => "classical",
            Mode::StragglerCorrected => "straggler_corrected",
            Mode::StragglerUncorrected => "straggler_uncorrected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RhsSpec {
    /// `v = A 1`.
    ATimesOnes,
    /// Whitespace-separated values.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialGuess {
    Zero,
    /// Standard normal entries, shared by all trials.
    Gaussian {
        seed: u64,
    },
    /// `z_0 = omega v` (`nu v` for Chebyshev).
    OmegaV,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundsSpec {
    Estimate,
    Explicit { lambda_min: f64, lambda_max: f64 },
}

fn default_kind() -> StraggleKind {
    StraggleKind::UniformInterval
}
fn default_half_width() -> usize {
    100
}
fn default_lower_safety() -> f64 {
    0.9
}
fn default_upper_safety() -> f64 {
    1.1
}
fn default_rhs() -> RhsSpec {
    RhsSpec::ATimesOnes
}
fn default_initial() -> InitialGuess {
    InitialGuess::Zero
}
fn default_bounds() -> BoundsSpec {
    BoundsSpec::Estimate
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub matrix: MatrixSource,
    pub method: Method,
    pub mode: Mode,
    #[serde(default = "default_kind")]
    pub straggle: StraggleKind,
    pub tau: f64,
    #[serde(default = "default_half_width")]
    pub half_width: usize,
    pub m_values: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_rhs")]
    pub rhs: RhsSpec,
    #[serde(default = "default_initial")]
    pub initial: InitialGuess,
    #[serde(default = "default_bounds")]
    pub bounds: BoundsSpec,
    /// Chebyshev interval is `[lower * lambda_min, upper * lambda_max]`.
    #[serde(default = "default_lower_safety")]
    pub chebyshev_lower_safety: f64,
    #[serde(default = "default_upper_safety")]
    pub chebyshev_upper_safety: f64,
}

impl ExperimentConfig {
    /// Config with the default straggle law, right-hand side, initial guess,
    /// bounds and safety factors.
    pub fn new(
        matrix: MatrixSource,
        method: Method,
        mode: Mode,
        tau: f64,
        m_values: Vec<usize>,
        trials: usize,
        master_seed: u64,
    ) -> Self {
        Self {
            matrix,
            method,
            mode,
            straggle: default_kind(),
            tau,
            half_width: default_half_width(),
            m_values,
            trials,
            master_seed,
            rhs: default_rhs(),
            initial: default_initial(),
            bounds: default_bounds(),
            chebyshev_lower_safety: default_lower_safety(),
            chebyshev_upper_safety: default_upper_safety(),
        }
    }

    /// Checks everything that does not need the matrix.
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tau = {} outside (0, 1]",
                self.tau
            )));
        }
        if self.m_values.is_empty() {
            return Err(Error::InvalidArgument("m_values is empty".into()));
        }
        if self.m_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "m_values must be strictly ascending".into(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be positive".into()));
        }
        if !(self.chebyshev_lower_safety > 0.0 && self.chebyshev_upper_safety > 0.0) {
            return Err(Error::InvalidArgument(
                "Chebyshev safety factors must be positive".into(),
            ));
        }
        Ok(())
    }

    fn distribution(&self, n: usize) -> Result<StraggleDistribution> {
        if self.tau * (n as f64) < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "tau * N = {} is below 1",
                self.tau * n as f64
            )));
        }
        StraggleDistribution::from_tau(self.straggle, self.tau, self.half_width, n)
    }
}

/// `(1/N) sum_i x_i^2`.
pub fn mse(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("MSE of an empty vector".into()));
    }
    Ok(x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64)
}

fn mse_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64
}

/// Trial counts at which statistics are reported: `1, 2, 5, 10, 20, 50, ...`
/// up to `trials`, plus `trials` itself.
pub fn prefix_grid(trials: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut decade = 1usize;
    'outer: loop {
        for k in [1, 2, 5] {
            let Some(p) = decade.checked_mul(k) else {
                break 'outer;
            };
            if p > trials {
                break 'outer;
            }
            out.push(p);
        }
        decade = match decade.checked_mul(10) {
            Some(d) => d,
            None => break,
        };
    }
    if out.last() != Some(&trials) {
        out.push(trials);
    }
    out
}

/// Per-entry statistics of `z_m` over the first `trials` trials.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialStatistics {
    pub m: usize,
    pub trials: usize,
    pub sample_mean: Vec<f64>,
    /// Unbiased (`L - 1`) normalisation; NaN when `L = 1`.
    pub sample_variance: Vec<f64>,
    pub mse_vs_zm: f64,
    pub mse_vs_z: f64,
}

impl TrialStatistics {
    /// Average over entries of the per-entry sample variance.
    pub fn avg_sample_variance(&self) -> f64 {
        self.sample_variance.iter().sum::<f64>() / self.sample_variance.len() as f64
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatisticsRow {
    pub method: &'static str,
    pub mode: &'static str,
    pub tau: f64,
    pub m: usize,
    #[serde(rename = "L")]
    pub trials: usize,
    pub mse_vs_zm: f64,
    pub mse_vs_z: f64,
    pub avg_sample_variance: f64,
    pub seed: u64,
}

/// Run-level quantities recorded with the statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordMetadata {
    pub n: usize,
    pub nnz: usize,
    pub mse_convention: &'static str,
    pub bounds: SpectralBounds,
    /// `omega` for Richardson, `nu` for Chebyshev.
    pub step: f64,
    /// Step applied to the incomplete product.
    pub step_hat: f64,
    pub step_rule: &'static str,
    /// Chebyshev momentum `eta`; absent for Richardson.
    pub eta: Option<f64>,
    pub expected_t: f64,
    pub sampling_ratio: f64,
    pub reference_solution: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRecord {
    pub config: ExperimentConfig,
    pub metadata: RecordMetadata,
    pub rows: Vec<StatisticsRow>,
    /// Full statistics at `L = trials`, one per requested `m`.
    #[serde(skip)]
    pub final_statistics: Vec<TrialStatistics>,
    /// Wall-clock seconds; not serialised so records are reproducible.
    #[serde(skip)]
    pub elapsed_seconds: f64,
}

impl ExperimentRecord {
    pub fn statistics_at(&self, m: usize) -> Option<&TrialStatistics> {
        self.final_statistics.iter().find(|s| s.m == m)
    }

    pub fn row(&self, m: usize, trials: usize) -> Option<&StatisticsRow> {
        self.rows.iter().find(|r| r.m == m && r.trials == trials)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for row in &self.rows {
            writer
                .serialize(row)
                .map_err(|e| Error::Serialize(e.to_string()))?;
        }
        writer.flush().map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Reads whitespace-separated values.
pub fn load_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| {
                Error::InvalidArgument(format!("{}: bad value `{tok}`", path.display()))
            })
        })
        .collect()
}

/// Solution of `A z = v`: dense LU up to [`DENSE_REFERENCE_MAX_N`], otherwise
/// classical Chebyshev on `[0.99 lambda_min, 1.01 lambda_max]` to relative
/// residual `1e-12`.
pub fn reference_solution(
    a: &SparseMatrix,
    v: &[f64],
    bounds: &SpectralBounds,
) -> Result<(Vec<f64>, &'static str)> {
    check_len(a.n(), v.len())?;
    if a.n() <= DENSE_REFERENCE_MAX_N {
        let dense = DenseMatrix::from_sparse_capped(a, DENSE_REFERENCE_MAX_N)?;
        return Ok((dense.solve(v)?, "dense LU with partial pivoting"));
    }
    let coeffs = chebyshev_coeffs(0.99 * bounds.lambda_min, 1.01 * bounds.lambda_max)?;
    let z = chebyshev_solve(a, v, coeffs, vec![0.0; a.n()], 1e-12, 1_000_000)?;
    Ok((z, "classical Chebyshev to relative residual 1e-12"))
}

/// Everything a trial needs, prepared once per experiment.
struct Setup {
    a: SparseMatrix,
    v: Vec<f64>,
    dist: StraggleDistribution,
    solver: SolverSetup,
    metadata: RecordMetadata,
    z: Vec<f64>,
}

enum SolverSetup {
    Richardson(RichardsonParams),
    Chebyshev(ChebyshevParams),
}

fn initial_guess(spec: &InitialGuess, n: usize, v: &[f64], step: f64) -> Vec<f64> {
    match spec {
        InitialGuess::Zero => vec![0.0; n],
        InitialGuess::Gaussian { seed } => {
            let mut rng = SeedSpec::new(*seed, SHARED_TRIAL, 0).rng();
            (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
        }
        InitialGuess::OmegaV => v.iter().map(|x| step * x).collect(),
    }
}

fn prepare(config: &ExperimentConfig) -> Result<Setup> {
    config.validate()?;
    let a = config.matrix.load()?;
    let n = a.n();
    let dist = config.distribution(n)?;
    let v = match &config.rhs {
        RhsSpec::ATimesOnes => a.matvec(&vec![1.0; n])?,
        RhsSpec::File { path } => {
            let v = load_vector(path)?;
            check_len(n, v.len())?;
            v
        }
    };
    let bounds = match config.bounds {
        BoundsSpec::Estimate => estimate_bounds_with(&a, &PowerOptions::default())?,
        BoundsSpec::Explicit {
            lambda_min,
            lambda_max,
        } => SpectralBounds::new(lambda_min, lambda_max)?,
    };
    let scale = match config.mode {
        Mode::StragglerCorrected => n as f64 / dist.expected_t(),
        Mode::Classical | Mode::StragglerUncorrected => 1.0,
    };
    let step_rule = match config.mode {
        Mode::Classical => "classical (exact products)",
        Mode::StragglerCorrected => "corrected: step_hat = (N / E[T]) * step",
        Mode::StragglerUncorrected => "uncorrected: step_hat = step",
    };
    let (solver, step, eta) = match config.method {
        Method::Richardson => {
            let omega = omega_cr(&bounds)?;
            let z0 = initial_guess(&config.initial, n, &v, omega);
            let mut p = RichardsonParams::new(omega, *config.m_values.last().unwrap(), z0);
            p.omega_hat = scale * omega;
            (SolverSetup::Richardson(p), omega, None)
        }
        Method::Chebyshev => {
            let coeffs = chebyshev_coeffs(
                config.chebyshev_lower_safety * bounds.lambda_min,
                config.chebyshev_upper_safety * bounds.lambda_max,
            )?;
            let z0 = initial_guess(&config.initial, n, &v, coeffs.nu);
            let mut p = ChebyshevParams::new(coeffs, *config.m_values.last().unwrap(), z0);
            p.nu_hat = scale * coeffs.nu;
            (SolverSetup::Chebyshev(p), coeffs.nu, Some(coeffs.eta))
        }
    };
    let (z, reference) = reference_solution(&a, &v, &bounds)?;
    let metadata = RecordMetadata {
        n,
        nnz: a.nnz(),
        mse_convention: MSE_CONVENTION,
        bounds,
        step,
        step_hat: scale * step,
        step_rule,
        eta,
        expected_t: dist.expected_t(),
        sampling_ratio: dist.tau(),
        reference_solution: reference,
    };
    Ok(Setup {
        a,
        v,
        dist,
        solver,
        metadata,
        z,
    })
}

impl Setup {
    fn classical(&self, m_values: &[usize]) -> Result<IterateTrace> {
        match &self.solver {
            SolverSetup::Richardson(p) => {
                let p = RichardsonParams {
                    omega_hat: p.omega,
                    ..p.clone()
                };
                richardson_classical(&self.a, &self.v, &p, m_values)
            }
            SolverSetup::Chebyshev(p) => {
                let p = ChebyshevParams {
                    nu_hat: p.nu,
                    ..p.clone()
                };
                chebyshev_classical(&self.a, &self.v, &p, m_values)
            }
        }
    }

    fn trial(&self, m_values: &[usize], seed: SeedSpec) -> Result<IterateTrace> {
        match &self.solver {
            SolverSetup::Richardson(p) => {
                richardson_straggler(&self.a, &self.v, p, &self.dist, seed, m_values)
            }
            SolverSetup::Chebyshev(p) => {
                chebyshev_straggler(&self.a, &self.v, p, &self.dist, seed, m_values)
            }
        }
    }
}

/// Running per-entry mean and sum of squared deviations.
struct Welford {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(n: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let k = self.count as f64;
        for ((mu, m2), xi) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = xi - *mu;
            *mu += delta / k;
            *m2 += delta * (xi - *mu);
        }
    }

    fn variance(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![f64::NAN; self.mean.len()];
        }
        let d = (self.count - 1) as f64;
        self.m2.iter().map(|s| s / d).collect()
    }
}

fn chunk_size(n: usize, snapshots: usize) -> usize {
    // Bounds the memory held by one chunk of traces to about 64 MiB.
    let per_trial = (n * snapshots).max(1) * std::mem::size_of::<f64>();
    ((64 << 20) / per_trial).clamp(1, 256)
}

fn build_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::InvalidArgument("threads must be positive".into()));
        }
        builder = builder.num_threads(t);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

fn execute(
    config: &ExperimentConfig,
    threads: Option<usize>,
    prefixes: &[usize],
) -> Result<ExperimentRecord> {
    let started = std::time::Instant::now();
    let setup = prepare(config)?;
    let pool = build_pool(threads)?;
    let m_values = &config.m_values;
    let n = setup.a.n();

    let reference = setup.classical(m_values)?;
    let z_m: Vec<&[f64]> = m_values
        .iter()
        .map(|&m| reference.snapshot(m).expect("snapshot requested"))
        .collect();

    let mut acc: Vec<Welford> = m_values.iter().map(|_| Welford::new(n)).collect();
    let mut rows = Vec::with_capacity(prefixes.len() * m_values.len());
    let mut final_statistics = Vec::new();
    let mut next_prefix = prefixes.iter().peekable();

    let record_prefix = |acc: &[Welford], rows: &mut Vec<StatisticsRow>| {
        for (k, w) in acc.iter().enumerate() {
            let var = w.variance();
            let avg = var.iter().sum::<f64>() / n as f64;
            rows.push(StatisticsRow {
                method: config.method.as_str(),
                mode: config.mode.as_str(),
                tau: config.tau,
                m: m_values[k],
                trials: w.count,
                mse_vs_zm: mse_diff(&w.mean, z_m[k]),
                mse_vs_z: mse_diff(&w.mean, &setup.z),
                avg_sample_variance: avg,
                seed: config.master_seed,
            });
        }
    };

    let chunk = chunk_size(n, m_values.len());
    let mut start = 0usize;
    while start < config.trials {
        let end = (start + chunk).min(config.trials);
        let traces: Vec<IterateTrace> = if config.mode == Mode::Classical {
            Vec::new()
        } else {
            pool.install(|| {
                (start..end)
                    .into_par_iter()
                    .map(|trial| {
                        setup.trial(m_values, SeedSpec::trial(config.master_seed, trial as u64))
                    })
                    .collect::<Result<Vec<_>>>()
            })?
        };
        for offset in 0..end - start {
            let trace = traces.get(offset).unwrap_or(&reference);
            for (k, w) in acc.iter_mut().enumerate() {
                w.push(trace.snapshot(m_values[k]).expect("snapshot requested"));
            }
            let done = start + offset + 1;
            if next_prefix.next_if_eq(&&done).is_some() {
                record_prefix(&acc, &mut rows);
            }
        }
        start = end;
    }

    for (k, w) in acc.iter().enumerate() {
        final_statistics.push(TrialStatistics {
            m: m_values[k],
            trials: w.count,
            sample_variance: w.variance(),
            mse_vs_zm: mse_diff(&w.mean, z_m[k]),
            mse_vs_z: mse_diff(&w.mean, &setup.z),
            sample_mean: w.mean.clone(),
        });
    }
    // Rows ordered by m, then by trial count.
    rows.sort_by_key(|r| (r.m, r.trials));

    Ok(ExperimentRecord {
        config: config.clone(),
        metadata: setup.metadata,
        rows,
        final_statistics,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Runs `config.trials` trials and reports statistics at every requested `m`
/// and every trial-count prefix of [`prefix_grid`]. `threads = None` uses all
/// cores; the result does not depend on it.
pub fn run_trials(config: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentRecord> {
    execute(config, threads, &prefix_grid(config.trials))
}

/// Average sample variance of `z_m` over all trials, for every requested `m`.
/// Needs at least two trials.
pub fn variance_sweep(
    config: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<ExperimentRecord> {
    if config.trials < 2 {
        return Err(Error::InvalidArgument(
            "sample variance needs at least 2 trials".into(),
        ));
    }
    execute(config, threads, &[config.trials])
}
