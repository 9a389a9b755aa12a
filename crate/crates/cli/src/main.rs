//! Command-line front end: `decompose`, `simulate`, `fit`, `validate`,
//! `summarize`.
//!
//! Exit codes: 0 success, 1 runtime/data failure, 2 usage error.
//! Configuration precedence: built-in defaults < `--config` JSON file <
//! command-line flags. Every run writes a `run.json` echo of the fully
//! resolved configuration into the output directory.

mod cmd_decompose;
mod cmd_fit;
mod cmd_simulate;
mod cmd_summarize;
mod cmd_validate;
mod common;
mod fitio;
mod meta;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "multimort",
    version,
    about = "Joint small-area mortality estimation across subpopulations"
)]
struct Cli {
    /// JSON config file overlaying built-in defaults (flags still win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (created if missing). Default: the current
    /// directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Run-level random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for chain-level parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a principal-component basis from a curve-collection CSV.
    Decompose(cmd_decompose::DecomposeArgs),
    /// Generate synthetic population and death data with known truth.
    Simulate(cmd_simulate::SimulateArgs),
    /// Fit the hierarchical model to a dataset.
    Fit(cmd_fit::FitArgs),
    /// Evaluate a fit against simulation truth or held-out data.
    Validate(cmd_validate::ValidateArgs),
    /// Quantile table of one derived quantity from a fitted run.
    Summarize(cmd_summarize::SummarizeArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let globals = match common::Globals::resolve(&cli.config, &cli.out, cli.seed, cli.threads) {
        Ok(g) => g,
        Err(e) => return fail(&e),
    };
    let result = match &cli.command {
        Command::Decompose(args) => cmd_decompose::run(args, &globals),
        Command::Simulate(args) => cmd_simulate::run(args, &globals),
        Command::Fit(args) => cmd_fit::run(args, &globals),
        Command::Validate(args) => cmd_validate::run(args, &globals),
        Command::Summarize(args) => cmd_summarize::run(args, &globals),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(err: &common::CliError) -> ExitCode {
    eprintln!("error: {:#}", err.inner);
    ExitCode::from(err.exit_code)
}
