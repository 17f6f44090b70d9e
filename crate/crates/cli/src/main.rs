use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kolmosphere::commands::{
    cmd_density, cmd_simulate, cmd_solve, cmd_verify, Common, DensityArgs, Outcome, SimulateArgs, SolveArgs, VerifyArgs,
};
use kolmosphere::Parallel;

/// Spectral solver and Monte Carlo cross-checks for drifted Brownian motion
/// on the sphere run on an inverse-subordinator clock.
#[derive(Debug, Parser)]
#[command(name = "kolmosphere", version)]
struct Cli {
    /// Seed for every random stream of the run.
    #[arg(long, global = true, env = "KOLMOSPHERE_SEED", default_value_t = 2024)]
    seed: u64,
    /// Worker threads for Monte Carlo; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve initial data and write coefficient snapshots.
    Solve(SolveArgs),
    /// Transition density at a point or on a grid.
    Density(DensityArgs),
    /// Simulate endpoints of the time-changed motion.
    Simulate(SimulateArgs),
    /// Run a named self-check suite.
    Verify(VerifyArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = Common {
        seed: cli.seed,
        workers: cli.workers,
    };
    let exec = match Parallel::new(cli.workers) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a, &common, &exec),
        Command::Density(a) => cmd_density(a, &common, &exec),
        Command::Simulate(a) => cmd_simulate(a, &common, &exec),
        Command::Verify(a) => cmd_verify(a, &common, &exec),
    };
    match result {
        Ok(Outcome::Done(msg)) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Ok(Outcome::Verified(report)) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
