//! `mfn`: train, check, and inspect matrix function networks.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or input error,
//! 3 numerical abort.

mod bench;
mod check;
mod data;
mod decay;
mod manifest;
mod spectrum;
mod train;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mfn_core::MfnError;

#[derive(Debug, Parser)]
#[command(name = "mfn", version, about = "Matrix function networks on graphs and point clouds")]
struct Cli {
    /// Worker threads for batch-parallel work (all cores when unset).
    #[arg(long, global = true, env = "MFN_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write checkpoint, metrics CSV and manifest.
    Train(train::Args),
    /// Run an invariant suite on randomized instances.
    Check(check::Args),
    /// Off-diagonal decay profiles of single-pole resolvents on a chain.
    Decay(decay::Args),
    /// Op counts and timings of one resolvent evaluation per size.
    Bench(bench::Args),
    /// Operator eigenvalues before and after normalization.
    Spectrum(spectrum::Args),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Check(String),
    Core(MfnError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                MfnError::Numerical(_)
                | MfnError::NonFiniteLoss { .. }
                | MfnError::SingularMatrix { .. }
                | MfnError::PivotBreakdown { .. } => 3,
                MfnError::Internal(_) => 1,
                _ => 2,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<MfnError> for CliError {
    fn from(e: MfnError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Train(a) => train::run(a),
        Command::Check(a) => check::run(a),
        Command::Decay(a) => decay::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Spectrum(a) => spectrum::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mfn: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
