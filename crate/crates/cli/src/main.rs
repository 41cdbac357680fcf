//! `dissipon`: fit, certify, build and simulate exponential baths.

mod commands;
mod config;
mod engines;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dissipon_core::hops::HopsVariant;

use config::Engine;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or inconsistent input (exit 1).
    Config(String),
    /// A library routine failed (exit 2).
    Numerical { kind: &'static str, message: String },
    /// A check ran but missed its threshold (exit 3).
    Threshold(String),
}

impl From<dissipon_core::Error> for CliError {
    fn from(e: dissipon_core::Error) -> Self {
        CliError::Numerical {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical { .. } => 2,
            CliError::Threshold(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical { kind, message } => write!(f, "numerical failure ({kind}): {message}"),
            CliError::Threshold(m) => write!(f, "threshold exceeded: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "dissipon", version, about = "Exponential bath correlation functions, pseudomodes and open-system engines")]
struct Cli {
    /// Directory for all output files.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,

    /// Cap on worker threads for parallel engines.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit sampled BCF data with exponential sums.
    Fit(FitArgs),
    /// Certify positivity of the spectral density of a BCF.
    Certify(CertifyArgs),
    /// Build the pseudomode Lindblad model of a bath.
    Build(BuildArgs),
    /// Run one engine on a problem file.
    Simulate {
        #[command(subcommand)]
        engine: SimulateEngine,
    },
    /// Run several engines on one problem and compare reduced states.
    Compare(CompareArgs),
    /// Check empirical noise correlations against the BCF.
    NoiseCheck(NoiseArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzChoice {
    Physical,
    Direct,
    Both,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Samples as CSV (tau, re, im[, weight]) or JSON.
    input: PathBuf,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    terms: u64,
    #[arg(long, default_value_t = 16)]
    restarts: usize,
    #[arg(long, env = "DISSIPON_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = AnsatzChoice::Both)]
    ansatz: AnsatzChoice,
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
    /// Exponential down-weighting `w = exp(-rate tau)` when the samples carry no weights.
    #[arg(long)]
    weight_rate: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodChoice {
    Grid,
    PolynomialRoots,
    Both,
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    /// BCF JSON (`lambdas`, `amplitudes`) or residue JSON (`lambdas`, `residues`).
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodChoice::Both)]
    method: MethodChoice,
    #[arg(long, default_value_t = 100_000)]
    grid_points: usize,
    /// Points of the exported J(omega) and alpha(tau) curves.
    #[arg(long, default_value_t = 1001)]
    curve_points: usize,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// BCF or residue JSON.
    input: PathBuf,
    /// Also write a verification report; exits 3 if any check fails.
    #[arg(long)]
    verify: bool,
}

#[derive(Args, Debug, Clone)]
pub struct Overrides {
    /// Problem JSON.
    problem: PathBuf,
    #[arg(long)]
    heom_depth: Option<usize>,
    #[arg(long)]
    fock_cap: Option<usize>,
    #[arg(long)]
    hops_depth: Option<usize>,
    #[arg(long)]
    variant: Option<HopsVariant>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long, env = "DISSIPON_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Use fixed-step RK4 with this step instead of the adaptive integrator.
    #[arg(long)]
    rk4_step: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum SimulateEngine {
    Heom(Overrides),
    Lindblad(Overrides),
    Hops {
        #[command(flatten)]
        overrides: Overrides,
        /// Write the first K trajectories (norms per output time) as JSON lines.
        #[arg(long, default_value_t = 0)]
        dump_trajectories: usize,
    },
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Comma-separated engines; defaults to the problem's list or heom,lindblad.
    #[arg(long, value_delimiter = ',')]
    engines: Option<Vec<Engine>>,
    /// Maximum allowed trace distance between any two engines.
    #[arg(long, default_value_t = 1e-3)]
    threshold: f64,
}

#[derive(Args, Debug)]
pub struct NoiseArgs {
    /// BCF or residue JSON.
    input: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Probe times are `t_end * k / (probes - 1)`.
    #[arg(long, default_value_t = 3.0)]
    t_end: f64,
    #[arg(long, default_value_t = 5)]
    probes: usize,
    #[arg(long, env = "DISSIPON_SEED", default_value_t = 0)]
    seed: u64,
    /// Largest tolerated deviation in standard errors.
    #[arg(long, default_value_t = 4.0)]
    max_z: f64,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot set thread count: {e}")))?;
    }
    let mut out = output::OutputDir::create(&cli.output_dir)?;
    match cli.command {
        Command::Fit(a) => commands::fit(&a, &mut out),
        Command::Certify(a) => commands::certify(&a, &mut out),
        Command::Build(a) => commands::build(&a, &mut out),
        Command::Simulate { engine } => match engine {
            SimulateEngine::Heom(o) => commands::simulate(Engine::Heom, &o, 0, &mut out),
            SimulateEngine::Lindblad(o) => commands::simulate(Engine::Lindblad, &o, 0, &mut out),
            SimulateEngine::Hops {
                overrides,
                dump_trajectories,
            } => commands::simulate(Engine::Hops, &overrides, dump_trajectories, &mut out),
        },
        Command::Compare(a) => commands::compare(&a, &mut out),
        Command::NoiseCheck(a) => commands::noise_check(&a, &mut out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
