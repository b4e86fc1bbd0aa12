use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;
use stls_bench::experiment::{self, Experiment, ExperimentSpec};
use stls_bench::io::{self, IoError};
use stls_core::hetero::{self, HeterogeneityInstance, HeterogeneitySolution};
use stls_core::{
    logdet_tls, nn_stls, plain_tls, relative_error, reweighted_stls, ErrorStructure, SolverConfig, StlsError,
    StlsProblem, StlsSolution,
};

#[derive(Parser)]
#[command(
    name = "stls",
    version,
    about = "Structured total least squares solvers and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem read from disk.
    Solve(SolveArgs),
    /// Run a seeded experiment and write per-trial records as CSV.
    Experiment(ExperimentArgs),
    /// Recover state fractions from expression data and an indicator matrix.
    Hetero(HeteroArgs),
}

#[derive(Args)]
struct SolverOverrides {
    #[arg(long)]
    mu_growth: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    max_reweights: Option<usize>,
    #[arg(long)]
    feas_tol: Option<f64>,
    #[arg(long)]
    rank_tol: Option<f64>,
}

impl SolverOverrides {
    fn config(&self) -> SolverConfig {
        let mut c = SolverConfig::default();
        if let Some(v) = self.mu_growth {
            c.mu_growth = v;
        }
        if let Some(v) = self.delta {
            c.delta = v;
        }
        if let Some(v) = self.max_reweights {
            c.max_reweights = v;
        }
        if let Some(v) = self.feas_tol {
            c.feas_tol = v;
        }
        if let Some(v) = self.rank_tol {
            c.rank_tol = v;
        }
        c
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMethod {
    Svd,
    Nn,
    Rwnn,
    Logdet,
}

#[derive(Args)]
struct SolveArgs {
    /// Data matrix (CSV, or MatrixMarket for .mtx/.mm).
    #[arg(long)]
    input: PathBuf,
    /// `none`, `toeplitz` or `mask:PATH` (nonzero mask entries pin the error to zero).
    #[arg(long, default_value = "none")]
    structure: String,
    /// Entrywise error weights, same shape as the input.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: SolveMethod,
    /// Defaults to N − 1.
    #[arg(long)]
    target_rank: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Recorded in the diagnostics; the solvers are deterministic.
    #[arg(long, env = "STLS_SEED")]
    seed: Option<u64>,
    #[command(flatten)]
    solver: SolverOverrides,
}

#[derive(Args)]
struct ExperimentArgs {
    /// fig1a, fig1b, fig2a, fig2b, fig3 or hetero.
    #[arg(long)]
    name: String,
    /// Comma-separated sizes (matrix side, or conditions for hetero).
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, env = "STLS_SEED", default_value_t = 0)]
    seed: u64,
    /// Comma-separated sweep values (outlier magnitudes for fig3, noise levels for hetero).
    #[arg(long, value_delimiter = ',')]
    params: Option<Vec<f64>>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append a wall-time column (makes the CSV run-dependent).
    #[arg(long)]
    timings: bool,
    /// Print a summary table to stderr.
    #[arg(long)]
    summary: bool,
    #[command(flatten)]
    solver: SolverOverrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeteroMethod {
    Svd,
    Rwnn,
}

#[derive(Args)]
struct HeteroArgs {
    /// Expression matrix X (genes × conditions).
    #[arg(long, required_unless_present = "synthetic")]
    expression: Option<PathBuf>,
    /// 0/1 indicator matrix S (genes × states).
    #[arg(long, required_unless_present = "synthetic")]
    indicator: Option<PathBuf>,
    /// Generate a planted instance instead of reading one.
    #[arg(long, conflicts_with_all = ["expression", "indicator"])]
    synthetic: bool,
    #[arg(long, default_value_t = 14)]
    genes: usize,
    #[arg(long, default_value_t = 2)]
    states: usize,
    #[arg(long, default_value_t = 6)]
    conditions: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, env = "STLS_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "rwnn")]
    method: HeteroMethod,
    /// Entrywise weights on X.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverOverrides,
}

enum Failure {
    Usage(String),
    Io(IoError),
    Solver(StlsError),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
            Failure::Solver(_) => 4,
        }
    }

    fn category(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Io(e) => e.category(),
            Failure::Solver(e) => e.category(),
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Io(e) => e.to_string(),
            Failure::Solver(e) => e.to_string(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Io(e)
    }
}

impl From<StlsError> for Failure {
    fn from(e: StlsError) -> Self {
        Failure::Solver(e)
    }
}

fn report(category: &str, message: &str) {
    let line = serde_json::json!({ "category": category, "message": message });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", e.to_string().trim_end());
            return ExitCode::from(2);
        }
    };
    let res = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Experiment(a) => run_experiment(a),
        Command::Hetero(a) => run_hetero(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report(f.category(), &f.message());
            ExitCode::from(f.code())
        }
    }
}

fn checked_config(o: &SolverOverrides) -> Result<SolverConfig, Failure> {
    let cfg = o.config();
    cfg.check().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn parse_structure(spec: &str, shape: (usize, usize)) -> Result<ErrorStructure, Failure> {
    match spec {
        "none" => Ok(ErrorStructure::Unconstrained),
        "toeplitz" => Ok(ErrorStructure::Toeplitz),
        _ => {
            let Some(path) = spec.strip_prefix("mask:").filter(|p| !p.is_empty()) else {
                return Err(Failure::Usage(format!(
                    "invalid --structure {spec:?} (expected none, toeplitz or mask:PATH)"
                )));
            };
            let mask = io::read_matrix_auto(Path::new(path))?;
            if mask.shape() != shape {
                return Err(StlsError::DimensionMismatch(format!(
                    "mask is {}×{}, input is {}×{}",
                    mask.nrows(),
                    mask.ncols(),
                    shape.0,
                    shape.1
                ))
                .into());
            }
            Ok(ErrorStructure::mask_from_fn(shape.0, shape.1, |i, j| {
                mask[(i, j)] != 0.0
            }))
        }
    }
}

/// Infinite α (unregularized baselines) serializes as `null`.
#[derive(Serialize)]
struct SolveDiagnostics {
    method: &'static str,
    alpha: Option<f64>,
    iterations: usize,
    feas_residual: f64,
    rank: usize,
    converged: bool,
    relative_error: Option<f64>,
    round_errors: Vec<f64>,
    seed: Option<u64>,
}

fn solve(a: &SolveArgs) -> Result<(), Failure> {
    let cfg = checked_config(&a.solver)?;
    let a_bar = io::read_matrix_auto(&a.input)?;
    let structure = parse_structure(&a.structure, a_bar.shape())?;
    let mut p = StlsProblem::new(a_bar, structure);
    if let Some(w) = &a.weights {
        p = p.with_weights(io::read_matrix_auto(w)?);
    }
    if let Some(k) = a.target_rank {
        p = p.with_target_rank(k);
    }
    let p = p.validate().map_err(StlsError::Invalid)?;
    let (sol, name): (StlsSolution, _) = match a.method {
        SolveMethod::Svd => (plain_tls(&p)?, "svd"),
        SolveMethod::Logdet => {
            if !p.structure.is_unconstrained() {
                return Err(StlsError::StructureNotSupported.into());
            }
            (logdet_tls(&p.a_bar)?, "logdet")
        }
        SolveMethod::Nn => (nn_stls(&p, &cfg)?.0, "nn"),
        SolveMethod::Rwnn => (reweighted_stls(&p, &cfg)?.0, "rwnn"),
    };
    io::create_dir(&a.out)?;
    let fmt = io::Format::Csv;
    io::write_matrix(&a.out.join("a_hat.csv"), &sol.a_hat, fmt)?;
    io::write_matrix(&a.out.join("e_hat.csv"), &sol.e_hat, fmt)?;
    io::write_matrix(
        &a.out.join("null_vec.csv"),
        &DMatrix::from_column_slice(sol.null_vec.len(), 1, sol.null_vec.as_slice()),
        fmt,
    )?;
    let d = &sol.diagnostics;
    let diag = SolveDiagnostics {
        method: name,
        alpha: sol.alpha.is_finite().then_some(sol.alpha),
        iterations: d.total_iterations,
        feas_residual: d.feas_residual,
        rank: d.numerical_rank,
        converged: d.converged,
        relative_error: relative_error(&p, &sol).ok(),
        round_errors: d.round_errors.clone(),
        seed: a.seed,
    };
    let json = serde_json::to_string_pretty(&diag).expect("diagnostics serialize");
    io::write_text(&a.out.join("diagnostics.json"), &(json + "\n"))?;
    Ok(())
}

fn run_experiment(a: &ExperimentArgs) -> Result<(), Failure> {
    let name: Experiment = a.name.parse().map_err(Failure::Usage)?;
    let mut spec = ExperimentSpec::new(name, a.seed);
    spec.trials = a.trials;
    spec.solver = a.solver.config();
    if let Some(s) = &a.sizes {
        spec.sizes = s.clone();
    }
    if let Some(p) = &a.params {
        spec.params = p.clone();
    }
    let records = experiment::run_experiment(&spec).map_err(Failure::Usage)?;
    let csv = experiment::records_to_csv(&records, a.timings);
    match &a.out {
        Some(path) => io::write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    if a.summary {
        eprint!("{}", experiment::format_summary(&experiment::summarize(&records)));
    }
    Ok(())
}

#[derive(Serialize)]
struct HeteroDiagnostics {
    method: &'static str,
    gap: f64,
    non_identifiable: bool,
    cosine: Option<f64>,
    scale_convention: &'static str,
    alpha: Option<f64>,
    iterations: Option<usize>,
    feas_residual: Option<f64>,
    rank: Option<usize>,
    converged: Option<bool>,
}

fn run_hetero(a: &HeteroArgs) -> Result<(), Failure> {
    let cfg = checked_config(&a.solver)?;
    let inst = if a.synthetic {
        hetero::synthesize(a.genes, a.states, a.conditions, a.noise, a.seed)
            .map_err(|e| Failure::Usage(e.to_string()))?
    } else {
        let (Some(x), Some(s)) = (&a.expression, &a.indicator) else {
            return Err(Failure::Usage("--expression and --indicator are required".into()));
        };
        HeterogeneityInstance::new(io::read_matrix_auto(s)?, io::read_matrix_auto(x)?)?
    };
    let weights = a.weights.as_deref().map(io::read_matrix_auto).transpose()?;
    let (sol, name): (HeterogeneitySolution, _) = match a.method {
        HeteroMethod::Svd => (hetero::solve_noiseless(&inst)?, "svd"),
        HeteroMethod::Rwnn => (hetero::solve_noisy_weighted(&inst, weights.as_ref(), &cfg)?, "rwnn"),
    };
    io::create_dir(&a.out)?;
    let fmt = io::Format::Csv;
    io::write_matrix(&a.out.join("u.csv"), &sol.u, fmt)?;
    let lambda = DMatrix::from_column_slice(sol.lambda_vec.len(), 1, sol.lambda_vec.as_slice());
    io::write_matrix(&a.out.join("lambda.csv"), &lambda, fmt)?;
    if let Some(xe) = &sol.x_error {
        io::write_matrix(&a.out.join("x_error.csv"), xe, fmt)?;
    }
    let d = sol.diagnostics.as_ref();
    let diag = HeteroDiagnostics {
        method: name,
        gap: sol.gap,
        non_identifiable: sol.non_identifiable,
        cosine: sol.cosine,
        scale_convention: HeterogeneitySolution::SCALE_CONVENTION,
        alpha: d.and_then(|d| d.round_alphas.last().copied()).filter(|a| a.is_finite()),
        iterations: d.map(|d| d.total_iterations),
        feas_residual: d.map(|d| d.feas_residual),
        rank: d.map(|d| d.numerical_rank),
        converged: d.map(|d| d.converged),
    };
    let json = serde_json::to_string_pretty(&diag).expect("diagnostics serialize");
    io::write_text(&a.out.join("diagnostics.json"), &(json + "\n"))?;
    Ok(())
}
