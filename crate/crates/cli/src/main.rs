//! `aif` — train task-to-classifier mappings with approximately equalized
//! per-individual error or false-positive rates, compare against the
//! error-optimal/random mixture baseline, and apply trained mappings to new
//! tasks.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::Config;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Data(_) => 3,
            AppError::Numeric(_) => 4,
        }
    }
}

impl From<aif_core::Error> for AppError {
    fn from(err: aif_core::Error) -> Self {
        use aif_core::Error as E;
        match err {
            E::InvalidParameter(_) | E::DimensionMismatch { .. } | E::EmptyPool
            | E::PoolGuardExceeded(..) => AppError::Config(err.to_string()),
            E::Data(_) | E::Io(_) | E::Csv(_) => AppError::Data(err.to_string()),
            E::Numeric(_) => AppError::Numeric(err.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "aif", version, about = "Individually fair multi-task classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per alpha and write trajectory.csv, spread.csv,
    /// report.json and model.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        output: Option<PathBuf>,
        /// RNG seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default all cores; never changes results).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Evaluate the error-optimal/random mixture baseline on the same panel.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Apply a trained model to new task label columns.
    Apply {
        /// Serialized model (model.json from a training run).
        model: PathBuf,
        /// CSV of label columns over the training individuals.
        labels: PathBuf,
        #[arg(long, default_value = "out")]
        output: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("AIF_LOG", "info");
    env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init()
        .ok();
}

fn init_threads(threads: Option<usize>) -> Result<(), AppError> {
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| AppError::Config(format!("cannot configure {t} threads: {e}")))?;
    }
    Ok(())
}

fn run() -> Result<(), AppError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train {
            config,
            output,
            seed,
            threads,
        } => {
            init_threads(threads)?;
            let cfg = Config::load(&config)?;
            let out = output.unwrap_or_else(|| cfg.output.clone());
            let seed = seed.unwrap_or(cfg.seed);
            commands::cmd_train(&cfg, &out, seed)
        }
        Command::Baseline {
            config,
            output,
            seed,
            threads,
        } => {
            init_threads(threads)?;
            let cfg = Config::load(&config)?;
            let out = output.unwrap_or_else(|| cfg.output.clone());
            let seed = seed.unwrap_or(cfg.seed);
            commands::cmd_baseline(&cfg, &out, seed)
        }
        Command::Apply {
            model,
            labels,
            output,
            threads,
        } => {
            init_threads(threads)?;
            commands::cmd_apply(&model, &labels, &output)
        }
    }
}

fn main() -> ExitCode {
    init_logging();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            log::error!("{err}");
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
