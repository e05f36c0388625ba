//! `cqa` — one binary driving the whole complex-query-answering pipeline:
//! chronological splitting, benchmark generation, hardness classification,
//! link-predictor training, beam-search answering, and stratified
//! evaluation with significance reports.
//!
//! Logs go to standard error; data only to files. Exit codes: 0 success,
//! 1 usage error, 2 data error, 3 internal error.

mod commands;
mod config;
mod failure;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use failure::Failure;

#[derive(Parser)]
#[command(
    name = "cqa",
    version,
    about = "Complex query answering workbench over incomplete knowledge graphs"
)]
struct Cli {
    /// TOML configuration file; explicit flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads. Present subcommands compute on one worker; outputs
    /// are identical for any value.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chronologically split a timestamped triple file into train/valid/test.
    Split(commands::split::SplitArgs),
    /// Sample training queries answerable on the training graph.
    GenTrain(commands::gen::GenTrainArgs),
    /// Generate a hardness-balanced benchmark with per-bucket quotas.
    GenBench(commands::gen::GenBenchArgs),
    /// Label every query/answer pair with its hardness.
    Classify(commands::classify::ClassifyArgs),
    /// Summarize label files into a reduction matrix (and imbalance tables).
    Stats(commands::classify::StatsArgs),
    /// Train the complex-embedding link predictor and save a checkpoint.
    TrainLp(commands::train_lp::TrainLpArgs),
    /// Answer query files by fuzzy beam search over a trained predictor.
    Answer(commands::answer::AnswerArgs),
    /// Compute filtered ranking metrics stratified by hardness.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Combine evaluation runs into comparison and significance tables.
    Report(commands::report::ReportArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            f.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.threads == 0 {
        return Err(failure::usage("--threads must be at least 1"));
    }
    let cfg = config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Split(args) => commands::split::run(args, &cfg),
        Command::GenTrain(args) => commands::gen::run_train(args, &cfg),
        Command::GenBench(args) => commands::gen::run_bench(args, &cfg),
        Command::Classify(args) => commands::classify::run_classify(args, &cfg),
        Command::Stats(args) => commands::classify::run_stats(args, &cfg),
        Command::TrainLp(args) => commands::train_lp::run(args, &cfg),
        Command::Answer(args) => commands::answer::run(args, &cfg),
        Command::Evaluate(args) => commands::evaluate::run(args, &cfg),
        Command::Report(args) => commands::report::run(args, &cfg),
    }
}
