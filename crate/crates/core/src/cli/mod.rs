//! Command-line experiment runner.
//!
//! `jumprl [--config FILE] [--seed N] [--out DIR] [--threads N] <command>`
//! reads the command's table from the configuration file, runs it and
//! writes CSV tables, JSON reports and a `manifest.json` into `DIR`.
//!
//! Exit codes: 0 success, 1 a check ran and failed, 2 usage error,
//! 3 invalid configuration, 4 output directory not writable, 5 runtime
//! failure.

pub mod artifacts;
mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use artifacts::Manifest;
use artifacts::{ArtifactDir, ArtifactError};
use commands::Ctx;
pub use commands::Outcome;
pub use config::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_OUTPUT: i32 = 4;
pub const EXIT_RUNTIME: i32 = 5;

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "jumprl",
    version,
    about = "Continuous-time RL experiments for jump-diffusion markets"
)]
pub struct Cli {
    /// TOML configuration with one table per command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate price paths.
    Simulate,
    /// Fit Black-Scholes and Merton parameters to daily closes.
    Estimate,
    /// Offline-episodic q-learning for mean-variance portfolios.
    TrainMvOffline,
    /// Online-incremental q-learning for mean-variance portfolios.
    TrainMvOnline,
    /// Actor-critic training of the hedging policy.
    TrainHedge,
    /// Mean squared hedging errors of fixed policies on common test paths.
    EvalHedge,
    /// Time-discretisation error of grid-sampled values across meshes.
    Convergence,
    /// Martingale statistics of the optimal value and q-function.
    MartingaleCheck,
    /// Fourier-cosine option prices and deltas.
    Price,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::TrainMvOffline => "train-mv-offline",
            Command::TrainMvOnline => "train-mv-online",
            Command::TrainHedge => "train-hedge",
            Command::EvalHedge => "eval-hedge",
            Command::Convergence => "convergence",
            Command::MartingaleCheck => "martingale-check",
            Command::Price => "price",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Output(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Output(_) => EXIT_OUTPUT,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Validation(m) => write!(f, "invalid configuration: {m}"),
            CliError::Output(m) => write!(f, "cannot write output: {m}"),
            CliError::Runtime(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::InvalidParameter(_)
            | crate::Error::Config(_)
            | crate::Error::ZeroSharpe => CliError::Validation(e.to_string()),
            crate::Error::Parse { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        match e {
            ArtifactError::Unwritable(_) => CliError::Output(e.to_string()),
            ArtifactError::Schema(_) => CliError::Runtime(e.to_string()),
        }
    }
}

/// Section of `cfg` used by `command`, validated, as JSON for the manifest.
fn validated_section(
    command: Command,
    cfg: &ExperimentConfig,
) -> Result<serde_json::Value, CliError> {
    macro_rules! section {
        ($s:expr) => {{
            $s.validate().map_err(CliError::Validation)?;
            serde_json::to_value(&$s).map_err(|e| CliError::Runtime(e.to_string()))?
        }};
    }
    Ok(match command {
        Command::Simulate => section!(cfg.simulate),
        Command::Estimate => section!(cfg.estimate),
        Command::TrainMvOffline => section!(cfg.train_mv_offline),
        Command::TrainMvOnline => section!(cfg.train_mv_online),
        Command::TrainHedge => section!(cfg.train_hedge),
        Command::EvalHedge => section!(cfg.eval_hedge),
        Command::Convergence => section!(cfg.convergence),
        Command::MartingaleCheck => section!(cfg.martingale_check),
        Command::Price => section!(cfg.price),
    })
}

/// Run one command with an already parsed configuration. Work runs on the
/// current rayon pool.
pub fn execute(
    command: Command,
    cfg: &ExperimentConfig,
    seed: u64,
    out: &Path,
) -> Result<(Outcome, Manifest), CliError> {
    let section = validated_section(command, cfg)?;
    let mut dir = ArtifactDir::create(out)?;
    let mut ctx = Ctx {
        seed,
        streams: crate::rng::Streams::new(seed),
        out: &mut dir,
    };
    log::info!("{} seed={seed} out={}", command.name(), out.display());
    let outcome = match command {
        Command::Simulate => commands::simulate(&cfg.simulate, &mut ctx),
        Command::Estimate => commands::estimate(&cfg.estimate, &mut ctx),
        Command::TrainMvOffline => commands::train_mv_offline(&cfg.train_mv_offline, &mut ctx),
        Command::TrainMvOnline => commands::train_mv_online(&cfg.train_mv_online, &mut ctx),
        Command::TrainHedge => commands::train_hedge_cmd(&cfg.train_hedge, &mut ctx),
        Command::EvalHedge => commands::eval_hedge(&cfg.eval_hedge, &mut ctx),
        Command::Convergence => commands::convergence(&cfg.convergence, &mut ctx),
        Command::MartingaleCheck => commands::martingale_check(&cfg.martingale_check, &mut ctx),
        Command::Price => commands::price(&cfg.price, &mut ctx),
    }?;
    let manifest = dir.finish(command.name(), seed, section)?;
    Ok((outcome, manifest))
}

/// Load the configuration named by the flags and run the command.
pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(CliError::Validation)?,
        None => ExperimentConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let go = || execute(cli.command, &cfg, seed, &cli.out).map(|(o, _)| o);
    match cli.threads {
        None => go(),
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(go),
    }
}

/// Parse `args`, run, report errors on stderr and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(Outcome::Done) | Ok(Outcome::Check(true)) => EXIT_OK,
        Ok(Outcome::Check(false)) => {
            eprintln!(
                "{}: check failed; see {}",
                cli.command.name(),
                cli.out.display()
            );
            EXIT_CHECK_FAILED
        }
        Err(e) => {
            eprintln!("jumprl {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
