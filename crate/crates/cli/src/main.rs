// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

/// Simulation, best replies and equilibrium checks for wars of attrition.
#[derive(Parser, Debug)]
#[command(name = "attrition", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Scenario JSON file.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Master seed; overrides the scenario.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    #[arg(long = "grid-n", global = true)]
    pub grid_n: Option<usize>,
    /// Value tolerance of the grid solver.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample paths and local times.
    Simulate,
    /// Monte Carlo payoffs of the scenario profile.
    Payoff,
    /// Best-reply value functions against the scenario profile.
    BestReply,
    /// Markov-perfect equilibrium check of the scenario profile.
    Verify,
    /// Solve and verify the game without pure equilibrium.
    Example,
    /// Densities of the mollification homotopy.
    Mollify {
        /// Mollify a unit atom at this point instead of the scenario measure.
        #[arg(long)]
        atom: Option<f64>,
        /// Smoothing parameters (repeatable).
        #[arg(long)]
        eps: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = &cli.common;
    let res = match &cli.command {
        Command::Simulate => commands::simulate(c),
        Command::Payoff => commands::payoff(c),
        Command::BestReply => commands::best_reply(c),
        Command::Verify => commands::verify(c),
        Command::Example => commands::example(c),
        Command::Mollify { atom, eps } => commands::mollify(c, *atom, eps),
    };
    match res {
        Ok(commands::Status::Ok) => ExitCode::SUCCESS,
        Ok(commands::Status::Failed(why)) => {
            eprintln!("verification failed: {why}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
