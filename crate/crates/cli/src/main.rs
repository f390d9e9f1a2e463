//! `straggle`: command-line driver for the straggler-tolerant solvers.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or convergence errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use straggler_core::harness::{
    self, BoundsSpec, ExperimentConfig, ExperimentRecord, InitialGuess, MatrixSource, Method, Mode,
    RhsSpec,
};
use straggler_core::laplacian::{gen_laplacian_1d, gen_laplacian_3d};
use straggler_core::mtx::{load_matrix_market, save_matrix_market};
use straggler_core::solvers::{
    chebyshev_classical, chebyshev_coeffs, chebyshev_straggler, corrected_step, omega_cr,
    richardson_classical, richardson_straggler, ChebyshevParams, RichardsonParams,
};
use straggler_core::spectral::{estimate_bounds_with, PowerOptions, SpectralBounds};
use straggler_core::straggle::{SeedSpec, StraggleDistribution, StraggleKind};
use straggler_core::{verify, SparseMatrix};

/// Directory for relative and default output paths.
const OUT_DIR_ENV: &str = "STRAGGLE_OUT_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "straggle",
    version,
    about = "Straggler-tolerant Richardson and Chebyshev solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the 7-point (or 1D 3-point) Laplacian as Matrix Market.
    GenLaplacian {
        /// Grid points per dimension.
        #[arg(long)]
        n: usize,
        /// Grid dimension: 3 for the 7-point stencil, 1 for the 3-point stencil.
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..=3))]
        dim: u8,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate extreme eigenvalues by power iteration.
    EigBounds {
        #[command(flatten)]
        matrix: MatrixArgs,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 20_000)]
        max_iter: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one solve and write the final iterate, one value per line.
    Solve(RunCommand),
    /// Run Monte-Carlo trials and write CSV and JSON records.
    Experiment(RunCommand),
    /// Average sample variance of the iterates over all trials.
    VarianceSweep(RunCommand),
    /// Run the small-scale oracle property checks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct MatrixArgs {
    /// Matrix Market file.
    #[arg(long, conflicts_with = "laplacian")]
    matrix: Option<PathBuf>,
    /// Generate the 3D Laplacian with this many points per dimension.
    #[arg(long)]
    laplacian: Option<usize>,
}

#[derive(Args, Debug)]
struct RunCommand {
    /// Flat TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
struct RunArgs {
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    laplacian: Option<usize>,
    /// richardson | chebyshev
    #[arg(long)]
    method: Option<String>,
    /// classical | straggler_corrected | straggler_uncorrected
    #[arg(long)]
    mode: Option<String>,
    /// uniform_interval | fixed | full
    #[arg(long)]
    straggle: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    half_width: Option<usize>,
    /// Iteration counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Right-hand side file; default is `A * ones`.
    #[arg(long)]
    rhs: Option<PathBuf>,
    /// zero | gaussian | omega_v
    #[arg(long)]
    initial: Option<String>,
    #[arg(long)]
    initial_seed: Option<u64>,
    #[arg(long, requires = "lambda_max")]
    lambda_min: Option<f64>,
    #[arg(long, requires = "lambda_min")]
    lambda_max: Option<f64>,
    #[arg(long)]
    chebyshev_lower_safety: Option<f64>,
    #[arg(long)]
    chebyshev_upper_safety: Option<f64>,
    /// Worker threads; default all cores. Does not affect results.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON record path; default is the CSV path with a `.json` extension.
    #[arg(long)]
    json: Option<PathBuf>,
}

macro_rules! merge_fields {
    ($flags:ident, $file:ident, $($f:ident),*) => {
        RunArgs { $($f: $flags.$f.or($file.$f)),* }
    };
}

impl RunArgs {
    /// Explicit flags override config-file values.
    fn merged(self, file: RunArgs) -> RunArgs {
        let flags = self;
        let flag_matrix = flags.matrix.is_some();
        let mut out = merge_fields!(
            flags,
            file,
            matrix,
            laplacian,
            method,
            mode,
            straggle,
            tau,
            half_width,
            m,
            trials,
            seed,
            rhs,
            initial,
            initial_seed,
            lambda_min,
            lambda_max,
            chebyshev_lower_safety,
            chebyshev_upper_safety,
            threads,
            out,
            json
        );
        // A matrix flag replaces a config-file Laplacian and vice versa.
        if out.matrix.is_some() && out.laplacian.is_some() {
            if flag_matrix {
                out.laplacian = None;
            } else {
                out.matrix = None;
            }
        }
        out
    }
}

/// Failure category, mapped to the exit code.
enum Failure {
    Usage(String),
    Data(String),
}

impl From<straggler_core::Error> for Failure {
    fn from(e: straggler_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn parse_method(s: &str) -> Result<Method, Failure> {
    match s {
        "richardson" => Ok(Method::Richardson),
        "chebyshev" => Ok(Method::Chebyshev),
        _ => Err(usage(format!(
            "unknown method `{s}` (richardson | chebyshev)"
        ))),
    }
}

fn parse_mode(s: &str) -> Result<Mode, Failure> {
    match s {
        "classical" => Ok(Mode::Classical),
        "straggler_corrected" => Ok(Mode::StragglerCorrected),
        "straggler_uncorrected" => Ok(Mode::StragglerUncorrected),
        _ => Err(usage(format!(
            "unknown mode `{s}` (classical | straggler_corrected | straggler_uncorrected)"
        ))),
    }
}

fn parse_kind(s: &str) -> Result<StraggleKind, Failure> {
    match s {
        "uniform_interval" => Ok(StraggleKind::UniformInterval),
        "fixed" => Ok(StraggleKind::Fixed),
        "full" => Ok(StraggleKind::Full),
        _ => Err(usage(format!(
            "unknown straggle law `{s}` (uniform_interval | fixed | full)"
        ))),
    }
}

fn build_config(args: &RunArgs, default_trials: usize) -> Result<ExperimentConfig, Failure> {
    let matrix = match (&args.matrix, args.laplacian) {
        (Some(p), None) => MatrixSource::File { path: p.clone() },
        (None, Some(k)) => MatrixSource::Laplacian3d { n_per_dim: k },
        (None, None) => return Err(usage("one of --matrix or --laplacian is required")),
        (Some(_), Some(_)) => return Err(usage("--matrix and --laplacian are exclusive")),
    };
    let method = parse_method(args.method.as_deref().unwrap_or("richardson"))?;
    let mode = parse_mode(args.mode.as_deref().unwrap_or("classical"))?;
    let tau = args.tau.unwrap_or(1.0);
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(usage(format!("invalid tau {tau}: must lie in (0, 1]")));
    }
    let m_values = match args.m.clone() {
        Some(m) => m,
        None => return Err(usage("--m is required")),
    };
    if m_values.is_empty() || m_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(usage("--m must be a nonempty strictly ascending list"));
    }
    let trials = args.trials.unwrap_or(default_trials);
    if trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    let mut config = ExperimentConfig::new(
        matrix,
        method,
        mode,
        tau,
        m_values,
        trials,
        args.seed.unwrap_or(0),
    );
    if let Some(s) = &args.straggle {
        config.straggle = parse_kind(s)?;
    }
    if let Some(w) = args.half_width {
        config.half_width = w;
    }
    if let Some(p) = &args.rhs {
        config.rhs = RhsSpec::File { path: p.clone() };
    }
    config.initial = match args.initial.as_deref().unwrap_or("zero") {
        "zero" => InitialGuess::Zero,
        "gaussian" => InitialGuess::Gaussian {
            seed: args.initial_seed.unwrap_or(0),
        },
        "omega_v" => InitialGuess::OmegaV,
        other => {
            return Err(usage(format!(
                "unknown initial guess `{other}` (zero | gaussian | omega_v)"
            )))
        }
    };
    if let (Some(lo), Some(hi)) = (args.lambda_min, args.lambda_max) {
        config.bounds = BoundsSpec::Explicit {
            lambda_min: lo,
            lambda_max: hi,
        };
    }
    if let Some(s) = args.chebyshev_lower_safety {
        config.chebyshev_lower_safety = s;
    }
    if let Some(s) = args.chebyshev_upper_safety {
        config.chebyshev_upper_safety = s;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn load_config_file(path: &Path) -> Result<RunArgs, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Resolves an output path against the output directory variable.
fn output_path(given: Option<&Path>, default_name: &str) -> PathBuf {
    let base = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    match (given, base) {
        (Some(p), Some(dir)) if p.is_relative() => dir.join(p),
        (Some(p), _) => p.to_path_buf(),
        (None, Some(dir)) => dir.join(default_name),
        (None, None) => PathBuf::from(default_name),
    }
}

fn load_matrix(args: &MatrixArgs) -> Result<SparseMatrix, Failure> {
    match (&args.matrix, args.laplacian) {
        (Some(p), None) => Ok(load_matrix_market(p)?),
        (None, Some(k)) => Ok(gen_laplacian_3d(k)?),
        _ => Err(usage("exactly one of --matrix or --laplacian is required")),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn gen_laplacian(n: usize, dim: u8, out: Option<PathBuf>) -> Result<(), Failure> {
    if n == 0 {
        return Err(usage("--n must be positive"));
    }
    let a = match dim {
        1 => gen_laplacian_1d(n)?,
        3 => gen_laplacian_3d(n)?,
        _ => return Err(usage("--dim must be 1 or 3")),
    };
    let path = output_path(out.as_deref(), &format!("laplacian{dim}d_{n}.mtx"));
    save_matrix_market(&a, &path)?;
    println!(
        "wrote {} (N = {}, nnz = {})",
        path.display(),
        a.n(),
        a.nnz()
    );
    Ok(())
}

fn eig_bounds(matrix: &MatrixArgs, tol: f64, max_iter: usize, seed: u64) -> Result<(), Failure> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(usage(format!("invalid --tol {tol}")));
    }
    let a = load_matrix(matrix)?;
    let b = estimate_bounds_with(
        &a,
        &PowerOptions {
            tol,
            max_iter,
            seed,
        },
    )?;
    println!("lambda_min = {:e}", b.lambda_min);
    println!("lambda_max = {:e}", b.lambda_max);
    println!("condition  = {:e}", b.condition_number());
    println!("omega_cr   = {:e}", omega_cr(&b)?);
    Ok(())
}

fn resolve(cmd: RunCommand) -> Result<RunArgs, Failure> {
    match &cmd.config {
        Some(path) => Ok(cmd.run.merged(load_config_file(path)?)),
        None => Ok(cmd.run),
    }
}

fn solve(cmd: RunCommand) -> Result<(), Failure> {
    let args = resolve(cmd)?;
    let config = build_config(&args, 1)?;
    let m = *config.m_values.last().unwrap();
    let a = config.matrix.load()?;
    let n = a.n();
    let v = match &config.rhs {
        RhsSpec::ATimesOnes => a.matvec(&vec![1.0; n])?,
        RhsSpec::File { path } => harness::load_vector(path)?,
    };
    let bounds = match config.bounds {
        BoundsSpec::Estimate => estimate_bounds_with(&a, &PowerOptions::default())?,
        BoundsSpec::Explicit {
            lambda_min,
            lambda_max,
        } => SpectralBounds::new(lambda_min, lambda_max)?,
    };
    if config.tau * (n as f64) < 1.0 {
        return Err(usage(format!(
            "tau * N = {} is below 1",
            config.tau * n as f64
        )));
    }
    let dist = StraggleDistribution::from_tau(config.straggle, config.tau, config.half_width, n)?;
    let seed = SeedSpec::trial(config.master_seed, 0);
    let z0 = vec![0.0; n];
    let trace = match config.method {
        Method::Richardson => {
            let omega = omega_cr(&bounds)?;
            let mut p = RichardsonParams::new(omega, m, z0);
            match config.mode {
                Mode::Classical => richardson_classical(&a, &v, &p, &[])?,
                Mode::StragglerCorrected => {
                    p.omega_hat = corrected_step(omega, &dist);
                    richardson_straggler(&a, &v, &p, &dist, seed, &[])?
                }
                Mode::StragglerUncorrected => richardson_straggler(&a, &v, &p, &dist, seed, &[])?,
            }
        }
        Method::Chebyshev => {
            let c = chebyshev_coeffs(
                config.chebyshev_lower_safety * bounds.lambda_min,
                config.chebyshev_upper_safety * bounds.lambda_max,
            )?;
            let mut p = ChebyshevParams::new(c, m, z0);
            match config.mode {
                Mode::Classical => chebyshev_classical(&a, &v, &p, &[])?,
                Mode::StragglerCorrected => {
                    p.nu_hat = corrected_step(c.nu, &dist);
                    chebyshev_straggler(&a, &v, &p, &dist, seed, &[])?
                }
                Mode::StragglerUncorrected => chebyshev_straggler(&a, &v, &p, &dist, seed, &[])?,
            }
        }
    };
    let az = a.matvec(&trace.last)?;
    let r: f64 = az
        .iter()
        .zip(&v)
        .map(|(x, y)| (y - x).powi(2))
        .sum::<f64>()
        .sqrt();
    let vn: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut text = String::with_capacity(n * 24);
    for x in &trace.last {
        writeln!(text, "{x:e}").unwrap();
    }
    let path = output_path(args.out.as_deref(), "solution.txt");
    write_text(&path, &text)?;
    println!(
        "{} {} m = {m}: relative residual {:.3e}; wrote {}",
        config.method.as_str(),
        config.mode.as_str(),
        r / vn.max(f64::MIN_POSITIVE),
        path.display()
    );
    Ok(())
}

fn save_record(
    record: &ExperimentRecord,
    args: &RunArgs,
    default_name: &str,
) -> Result<(), Failure> {
    let csv = output_path(args.out.as_deref(), default_name);
    let json = match &args.json {
        Some(p) => output_path(Some(p), ""),
        None => csv.with_extension("json"),
    };
    record.save_csv(&csv)?;
    record.save_json(&json)?;
    println!(
        "{} rows in {:.2} s; wrote {} and {}",
        record.rows.len(),
        record.elapsed_seconds,
        csv.display(),
        json.display()
    );
    Ok(())
}

fn summarise(record: &ExperimentRecord) {
    let md = &record.metadata;
    println!(
        "N = {}, nnz = {}, bounds = [{:e}, {:e}], step = {:e}, step_hat = {:e}, E[T] = {}",
        md.n,
        md.nnz,
        md.bounds.lambda_min,
        md.bounds.lambda_max,
        md.step,
        md.step_hat,
        md.expected_t
    );
    for s in &record.final_statistics {
        println!(
            "m = {:>5}  L = {:>7}  mse_vs_zm = {:.4e}  mse_vs_z = {:.4e}  avg_var = {:.4e}",
            s.m,
            s.trials,
            s.mse_vs_zm,
            s.mse_vs_z,
            s.avg_sample_variance()
        );
    }
}

fn experiment(cmd: RunCommand) -> Result<(), Failure> {
    let args = resolve(cmd)?;
    let config = build_config(&args, 1)?;
    let record = harness::run_trials(&config, args.threads)?;
    summarise(&record);
    save_record(&record, &args, "experiment.csv")
}

fn variance_sweep(cmd: RunCommand) -> Result<(), Failure> {
    let args = resolve(cmd)?;
    let config = build_config(&args, 2)?;
    if config.trials < 2 {
        return Err(usage("variance sweep needs --trials >= 2"));
    }
    let record = harness::variance_sweep(&config, args.threads)?;
    summarise(&record);
    save_record(&record, &args, "variance.csv")
}

fn run_verify(seed: u64) -> Result<(), Failure> {
    let outcomes = verify::run_all(seed)?;
    let mut failed = 0;
    for c in &outcomes {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        return Err(Failure::Data(format!(
            "{failed} of {} checks failed",
            outcomes.len()
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenLaplacian { n, dim, out } => gen_laplacian(n, dim, out),
        Command::EigBounds {
            matrix,
            tol,
            max_iter,
            seed,
        } => eig_bounds(&matrix, tol, max_iter, seed),
        Command::Solve(cmd) => solve(cmd),
        Command::Experiment(cmd) => experiment(cmd),
        Command::VarianceSweep(cmd) => variance_sweep(cmd),
        Command::Verify { seed } => run_verify(seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
