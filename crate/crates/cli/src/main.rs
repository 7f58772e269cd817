//! `confor`: run constrained forecasting scenarios from JSON files.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::Outcome;

#[derive(Parser)]
#[command(name = "confor", version, about = "Loss-optimal forecasts under aggregate constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Loss-optimal forecast under the scenario's constraint.
    Solve(RunArgs),
    /// Simulated distribution of the loss at the optimal forecast.
    LossDist(RunArgs),
    /// Re-solve over perturbed totals and compare with the first-order update.
    Sensitivity(RunArgs),
    /// Rejection sampling of the joint given the total.
    Abc(RunArgs),
    /// Exact conditioning of a multivariate normal or T on the total.
    Condition(RunArgs),
    /// Solve and simulate over a grid of correlations and totals.
    Sweep(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario file (JSON). Data paths inside it are relative to its directory.
    config: PathBuf,
    /// Override a config field, e.g. `--set constraint.total=21.4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Directory for result files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<Outcome> {
    let (Command::Solve(args)
    | Command::LossDist(args)
    | Command::Sensitivity(args)
    | Command::Abc(args)
    | Command::Condition(args)
    | Command::Sweep(args)) = &cli.command;
    let (scenario, base) = config::load(&args.config, &args.overrides)?;
    let resolved = scenario.resolve(&base)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let out = &args.out;
    match cli.command {
        Command::Solve(_) => commands::solve_cmd(&resolved, out),
        Command::LossDist(_) => commands::loss_dist_cmd(&resolved, out),
        Command::Sensitivity(_) => commands::sensitivity_cmd(&resolved, out),
        Command::Abc(_) => commands::abc_cmd(&resolved, out),
        Command::Condition(_) => commands::condition_cmd(&resolved, out),
        Command::Sweep(_) => commands::sweep_cmd(&resolved, &base, out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome { infeasible: None }) => ExitCode::SUCCESS,
        Ok(Outcome { infeasible: Some(msg) }) => {
            eprintln!("infeasible constraint: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
