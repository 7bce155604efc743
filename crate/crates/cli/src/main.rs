use std::path::PathBuf;
use std::process::ExitCode;

use bci_gmm::ErrorCategory;
use clap::{Parser, Subcommand};

mod commands;
mod config;

#[derive(Parser)]
#[command(name = "bci-gmm", version, about = "GMM target identification experiments")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one mixture per class from a labeled feature CSV.
    Fit(commands::FitArgs),
    /// Monte Carlo KL(f1 || f0) of a model file.
    Kl(commands::KlArgs),
    /// Run the policy comparison described by a config file.
    Simulate(commands::SimulateArgs),
    /// Adapt a source model to a stream of destination features.
    Transfer(commands::TransferArgs),
    /// Extract training-free features from epoch JSON lines.
    Features(commands::FeaturesArgs),
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(PathBuf, std::io::Error),
    Lib(bci_gmm::Error),
}

impl From<bci_gmm::Error> for CliError {
    fn from(e: bci_gmm::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(..) => 3,
            CliError::Lib(e) => match e.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Data => 3,
                ErrorCategory::Numerical => 4,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Kl(a) => commands::kl(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Transfer(a) => commands::transfer(a),
        Command::Features(a) => commands::features(a),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
