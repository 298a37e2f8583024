//! `xvh`: synthesize semi-paired data, train cross-view hash models, encode,
//! evaluate and sweep.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error, 3 the objective
//! increased during training.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "xvh", version, about = "Semi-supervised semi-paired cross-view hashing")]
struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic two-view dataset
    Synth(commands::SynthArgs),
    /// Train a hash model on the train side of a seeded split
    Train(commands::TrainArgs),
    /// Encode one view of a dataset into a code file
    Encode(commands::EncodeArgs),
    /// Evaluate a trained run on its held-out queries
    Eval(commands::EvalArgs),
    /// Beta/gamma grid plus labeled and paired fraction curves
    Sweep(commands::SweepArgs),
    /// Turn a finished sweep into per-figure CSV files
    Report(commands::ReportArgs),
}

/// Bad flag values, config files or paths.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_ERROR: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_OBJECTIVE_INCREASE: u8 = 3;

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    for cause in e.chain() {
        if let Some(xvhash::Error::ObjectiveIncrease { .. }) = cause.downcast_ref::<xvhash::Error>() {
            return EXIT_OBJECTIVE_INCREASE;
        }
    }
    EXIT_ERROR
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError("--threads must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Encode(a) => commands::encode(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep_cmd(a),
        Command::Report(a) => commands::report(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
