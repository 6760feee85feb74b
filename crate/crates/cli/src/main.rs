//! `sweepddm` command-line driver.
//!
//! Every command reads a TOML run configuration (see the README for the
//! grammar). Precedence is flag, then environment, then file.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Model(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Model(_) => 2,
            CliError::NoConvergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<sweepddm::Error> for CliError {
    fn from(e: sweepddm::Error) -> Self {
        use sweepddm::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Model(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "sweepddm", version, about = "Diagonal sweeping DDM for Helmholtz problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory, overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for random shot placement, overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Solve one problem with the configured solver.
    Solve,
    /// Gaussian-source mesh refinement against the free-space solution.
    Convergence,
    /// Residual decay of the stationary sweep iteration per partition.
    Decay,
    /// Multi-RHS pipeline timing model.
    Pipeline,
    /// Preconditioned GMRES iteration counts over a list of problems.
    PrecondStudy,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads {n}: {e}")))?;
    }
    let path = cli.config.ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let env: Vec<(String, String)> = std::env::vars().filter(|(k, _)| k.starts_with(config::ENV_PREFIX)).collect();
    let mut loaded = config::load(&text, &path.display().to_string(), &env)?;
    if let Some(dir) = cli.out {
        loaded.config.output.dir = dir;
    }
    if let Some(s) = cli.seed {
        loaded.config.seed = s;
    }
    let ctx = commands::Context::new(loaded, path.display().to_string())?;
    match cli.command {
        Command::Solve => commands::solve(&ctx),
        Command::Convergence => commands::convergence(&ctx),
        Command::Decay => commands::decay(&ctx),
        Command::Pipeline => commands::pipeline(&ctx),
        Command::PrecondStudy => commands::precond_study(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
