//! `watchdog`: train, calibrate, evaluate and apply an autoencoder gate in
//! front of a digit classifier.
//!
//! Exit codes: 0 success (or `guard` accepted), 1 `guard` rejected,
//! 2 usage/configuration/input error, 3 numeric failure.

mod commands;
mod config;
mod failure;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{GuardArgs, Run, ScoreArgs};
use config::{Overrides, OUT_DIR_ENV};
use failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "watchdog", version, about = "Autoencoder watchdog for out-of-distribution rejection")]
struct Cli {
    /// TOML run configuration; every key is optional
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides WATCHDOG_OUT_DIR and the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Run a single seed instead of the configured list
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Fixed acceptance threshold τ; images scoring at or below it are accepted
    #[arg(long, global = true, conflicts_with = "target_tpr")]
    tau: Option<f64>,

    /// Calibrate τ to accept this fraction of validation digits
    #[arg(long, global = true)]
    target_tpr: Option<f64>,

    /// Epochs for both networks
    #[arg(long, global = true)]
    epochs: Option<usize>,

    /// Seeds trained or evaluated concurrently
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    parallel_seeds: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an autoencoder and a classifier per seed and calibrate τ
    Train,
    /// Score a dataset with a trained autoencoder
    Score(ScoreArgs),
    /// Recompute τ from the validation split
    Calibrate,
    /// Build ROC curves, rejection tables and figures, averaged over seeds
    Evaluate,
    /// Screen one image and classify it if accepted
    Guard(GuardArgs),
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let overrides =
        Overrides { out: cli.out, seed: cli.seed, tau: cli.tau, target_tpr: cli.target_tpr, epochs: cli.epochs };
    let env_out = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let resolved = config::resolve(cli.config.as_deref(), &overrides, env_out)?;
    let run = Run::new(resolved, cli.parallel_seeds as usize);
    match &cli.command {
        Command::Train => commands::train(&run),
        Command::Score(args) => commands::score(&run, args),
        Command::Calibrate => commands::calibrate(&run),
        Command::Evaluate => commands::evaluate(&run),
        Command::Guard(args) => commands::guard(&run, args),
    }
}

fn main() -> ExitCode {
    // clap reports usage errors itself, exiting with status 2
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
