use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

mod commands;
mod config;
mod emit;

/// Fee analysis for two-asset geometric mean market makers.
#[derive(Debug, Parser)]
#[command(name = "g3m-fee-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(g3m_fee_lab::Error),
    Io(String),
    ChecksFailed(String),
}

impl From<g3m_fee_lab::Error> for CliError {
    fn from(e: g3m_fee_lab::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Core(_) => 1,
            CliError::ChecksFailed(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::ChecksFailed(names) => write!(f, "failed checks: {names}"),
        }
    }
}

const THREADS_ENV: &str = "G3M_FEE_LAB_THREADS";

fn configure_threads() -> Result<(), CliError> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a count, got '{v}'")))?,
        Err(_) => 0,
    };
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match configure_threads().and_then(|_| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
