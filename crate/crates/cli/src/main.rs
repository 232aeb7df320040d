//! `confaudit`: conformal prediction with coverage guarantees, conditional
//! validity corrections, drift monitoring, anomaly detection, and
//! calibration audits — batch CLI.
//!
//! Exit codes: 0 success, 1 configuration/validation error, 2 runtime
//! error. All randomness derives from the config seed (`--seed` overrides),
//! so a repeated run writes byte-identical artifacts. Set `CONFAUDIT_LOG`
//! (error|warn|info|debug) for diagnostics on stderr.

mod commands;
mod config;
mod pipeline;
mod predictor;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ResolvedConfig;

/// What went wrong, mapped onto the exit code contract.
#[derive(Debug)]
pub enum CliError {
    /// Bad config, bad flags, missing referenced files: exit 1.
    Validation(String),
    /// Failures during computation or output: exit 2.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "{m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "confaudit",
    about = "Conformal prediction toolkit: guaranteed-coverage prediction sets, drift monitoring, anomaly detection, and calibration audits",
    version
)]
struct Cli {
    /// Path to the JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config's output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the scorer, calibrate the configured method, write predictor.json.
    Calibrate,
    /// Predict sets or intervals for new examples with a saved predictor.
    Predict {
        /// CSV of examples to predict (same feature columns as training).
        #[arg(long)]
        input: PathBuf,
        /// Confidence level; defaults to the predictor's first level.
        #[arg(long)]
        level: Option<f64>,
    },
    /// Coverage, inefficiency, calibration-curve, and subgroup reports.
    Audit,
    /// Run the drift monitor over a stream; one JSON line per step.
    Drift {
        /// CSV of stream rows in arrival order.
        #[arg(long)]
        stream: PathBuf,
    },
    /// Conformal anomaly detection over a batch; one JSON line per verdict.
    Anomaly {
        /// CSV of examples to screen.
        #[arg(long)]
        input: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Validation("--config <path> is required".into()))?;
    let resolved = ResolvedConfig::load(&config_path, cli.seed, cli.out)?;
    match cli.command {
        Command::Calibrate => commands::cmd_calibrate(&resolved),
        Command::Predict { input, level } => {
            commands::cmd_predict(&resolved, &input, level)
        }
        Command::Audit => commands::cmd_audit(&resolved),
        Command::Drift { stream } => commands::cmd_drift(&resolved, &stream),
        Command::Anomaly { input } => commands::cmd_anomaly(&resolved, &input),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("CONFAUDIT_LOG", "warn"),
    )
    .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
