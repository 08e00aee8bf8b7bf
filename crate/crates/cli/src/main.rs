//! `rclab`: experiment runner for the random-cluster lab.
//!
//! Exit codes: 0 ok, 1 i/o failure, 2 configuration error, 3 oracle size cap,
//! 4 estimator failure. Errors go to stderr as one JSON line.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use config::{Command, ExperimentConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "rclab", version, about = "Random-cluster percolation experiments")]
struct Cli {
    /// Experiment to run (may come from the config file instead).
    #[arg(value_enum)]
    command: Option<Command>,
    /// Partial result files for `merge`.
    files: Vec<PathBuf>,
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    exp: ExperimentConfig,
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let file = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut flags = cli.exp;
    flags.command = cli.command;
    let cfg = file.overlay(&flags).resolve()?;
    if cfg.command() != Command::Merge && !cli.files.is_empty() {
        return Err(CliError::Config("positional files are only read by merge".into()));
    }
    commands::run(&cfg, &cli.out, &cli.files)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Config(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(2);
        }
    };
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
