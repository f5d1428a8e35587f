//! `pmi`: train, attack, and fingerprint models from a TOML run file.
//!
//! Exit status: 0 success, 1 failed self-check, 2 configuration error,
//! 3 pool capacity, 4 I/O or file format, 5 training divergence. Errors are
//! printed to stderr as a single `error kind=<kind> code=<code>: ...` line.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(
    name = "pmi",
    version,
    about = "Pooled membership inference fingerprinting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes model.bin, train_log.csv and seeds.json.
    Train(RunArgs),
    /// Prune or fine-tune a trained model; writes attacked.bin (and consumed.csv).
    Attack(RunArgs),
    /// Run the protocol; writes report.txt, report.json and accuracy.csv.
    Fingerprint(RunArgs),
    /// Pretty-print a report.json.
    Report { report: PathBuf },
    /// Check the fast paths against the reference implementations.
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare two model files parameter by parameter.
    ModelDiff { before: PathBuf, after: PathBuf },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run configuration (TOML).
    config: PathBuf,
    /// Replaces the file's top-level seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> Result<String, CliError> {
    let load = |args: &RunArgs| RunConfig::load(&args.config, args.seed);
    match cli.command {
        Command::Train(args) => commands::cmd_train(&load(&args)?),
        Command::Attack(args) => commands::cmd_attack(&load(&args)?),
        Command::Fingerprint(args) => commands::cmd_fingerprint(&load(&args)?),
        Command::Report { report } => commands::cmd_report(&report),
        Command::Selfcheck { seed } => commands::cmd_selfcheck(seed),
        Command::ModelDiff { before, after } => commands::cmd_model_diff(&before, &after),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code())
        }
    }
}
