//! `crq` — prediction, optimization, simulation, and sweep workflows for
//! one-bit CRQ precoding, emitting CSV/JSON tables.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad config, unknown key, unreadable file. Exit code 2.
    Config(String),
    /// A solver failed to converge or a bracket broke. Exit code 3.
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "crq",
    about = "One-bit CRQ precoding: SEP prediction, optimal regularization, Monte Carlo validation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Override a top-level config key, e.g. --set trials=100.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Asymptotic SEP table across noise levels (CSV).
    Predict,
    /// Closed-form SEP-optimal (rho, lambda) record (JSON).
    Optimize,
    /// Monte Carlo trials with theory comparison (JSON).
    Simulate,
    /// Predicted-SEP grid over (rho, lambda) (CSV).
    Sweep,
    /// Clustering/distribution report per delta (JSON).
    Distribution,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        // a pool may already exist when invoked from tests; that's fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let (value, hash) = config::load_config(config_path, &overrides)?;

    let rendered = match cli.command {
        Command::Predict => commands::cmd_predict(config::parse(value)?, &hash)?,
        Command::Optimize => commands::cmd_optimize(config::parse(value)?, &hash)?,
        Command::Simulate => commands::cmd_simulate(config::parse(value)?, &hash)?,
        Command::Sweep => commands::cmd_sweep(config::parse(value)?, &hash)?,
        Command::Distribution => commands::cmd_distribution(config::parse(value)?, &hash)?,
    };

    match &cli.output {
        Some(path) => std::fs::write(path, rendered)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("crq: {e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                CliError::Numerical(_) => ExitCode::from(3),
            }
        }
    }
}
