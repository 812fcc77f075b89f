//! Command-line interface for the relatedness toolkit.
//!
//! Every command resolves its effective configuration the same way: load
//! the file named by `--config` (or start from defaults), apply global
//! flags, apply command flags, write the result into the output directory
//! as `config.resolved.toml`. Rerunning a command with that snapshot as
//! `--config` reproduces the run.
//!
//! Exit status is 0 exactly when the command succeeded. Failures print a
//! single line to stderr: `error: <slug>: <message>`.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use relkit::Result;

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "relkit", version, about = "Sentence-pair relatedness toolkit")]
struct Cli {
    /// Configuration file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed override
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a source CSV into the canonical pair layout
    Import(commands::ImportArgs),
    /// Summarize the score distribution of a dataset
    Stats(commands::StatsArgs),
    /// Fine-tune a relatedness model and save the best checkpoint
    Train(commands::TrainArgs),
    /// Score a labeled dataset and report regression metrics
    Evaluate(commands::EvaluateArgs),
    /// Score a dataset and write predictions only
    Predict(commands::PredictArgs),
    /// Expand a training set with paraphrased pairs
    Augment(commands::AugmentArgs),
    /// Translate a dataset into the model language, then evaluate
    Xeval(commands::XevalArgs),
    /// Render plots and tables from a predictions file
    Report(commands::ReportArgs),
}

fn run(cli: &Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    match &cli.command {
        Command::Import(args) => commands::import(&mut config, args),
        Command::Stats(args) => commands::stats(&mut config, args),
        Command::Train(args) => commands::train_cmd(&mut config, args),
        Command::Evaluate(args) => commands::evaluate_cmd(&mut config, args),
        Command::Predict(args) => commands::predict_cmd(&mut config, args),
        Command::Augment(args) => commands::augment_cmd(&mut config, args),
        Command::Xeval(args) => commands::xeval_cmd(&mut config, args),
        Command::Report(args) => commands::report_cmd(&mut config, args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            // One line per failure, newlines flattened so scripts can
            // match on the slug.
            let message = error.to_string().replace('\n', " ");
            eprintln!("error: {}: {message}", error.slug());
            ExitCode::FAILURE
        }
    }
}
