//! `ttrs`: sample, fit, evaluate and sweep tensor-train density estimates.

mod commands;
mod config;
mod error;
mod models;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Overrides;

#[derive(Parser)]
#[command(name = "ttrs", version, about = "Tensor-train density estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw sample files for every grid point and trial.
    Sample(Overrides),
    /// Fit a tensor train to every sample file.
    Fit(Overrides),
    /// Score fitted trains against the ground truth into results.csv.
    Eval(Overrides),
    /// Sample, fit and score in memory; completed cells are reused.
    Sweep(Overrides),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (overrides, run): (&Overrides, fn(&config::ExperimentConfig) -> Result<(), error::CliError>) =
        match &cli.command {
            Command::Sample(o) => (o, commands::sample),
            Command::Fit(o) => (o, commands::fit),
            Command::Eval(o) => (o, commands::eval),
            Command::Sweep(o) => (o, commands::sweep),
        };
    match overrides.resolve().and_then(|cfg| run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ttrs: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
