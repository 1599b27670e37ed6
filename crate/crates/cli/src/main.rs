//! `mosrank`: reproducible rank-similarity MOS-prediction experiments.
//!
//! Exit codes: 0 success, 1 validation or runtime failure, 2 bad invocation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

#[derive(Parser)]
#[command(
    name = "mosrank",
    about = "Train, evaluate, and stress-test MOS predictors with rank-similarity objectives",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides [output] dir in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress informational output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a regressor and checkpoint on dev SRCC.
    Train(ConfigArgs),
    /// Evaluate a checkpoint on a labeled dataset.
    Eval {
        /// Model checkpoint to evaluate.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labeled dataset (JSONL or CSV).
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Suppress informational output.
        #[arg(long)]
        quiet: bool,
    },
    /// Zero-shot, few-shot, or semi-supervised finetuning.
    Semisup(ConfigArgs),
    /// Generate synthetic listening tests and run the built-in experiments.
    Simulate(ConfigArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => {
            commands::cmd_train(&args.config, args.out, args.seed, args.quiet)
        }
        Command::Eval {
            checkpoint,
            data,
            out,
            quiet,
        } => commands::cmd_eval(&checkpoint, &data, Some(out), quiet),
        Command::Semisup(args) => {
            commands::cmd_semisup(&args.config, args.out, args.seed, args.quiet)
        }
        Command::Simulate(args) => {
            commands::cmd_simulate(&args.config, args.out, args.seed, args.quiet)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
