//! Command-line runner binding the circuit models, training loops, inverse
//! recovery, and experiment harness into reproducible runs.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use commands::{CliError, RunArgs};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "pinn-rc",
    version,
    about = "Physics-informed neural network solver for parallel-RC circuit models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to the JSON run config.
    #[arg(long)]
    config: PathBuf,
    /// Output root; overrides the config and $PINN_RC_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for the run.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn into_run_args(self) -> RunArgs {
        RunArgs {
            config: self.config,
            out: self.out,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a network to predict the current I(t) for a configured case.
    Forward(ConfigArgs),
    /// Recover resistances/capacitances from observed current data.
    Inverse(ConfigArgs),
    /// Generate a synthetic dataset CSV from the analytical solution.
    Synth(ConfigArgs),
    /// Verify all gradients against finite differences.
    Gradcheck {
        /// Seed for the randomized checks.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train raw and log formulations under identical budgets and compare.
    Compare(ConfigArgs),
    /// Train across several domain lengths, scaling collocation density.
    Sweep(ConfigArgs),
}

fn main() {
    let cli = Cli::parse();
    let result: Result<(), CliError> = match cli.command {
        Command::Forward(args) => commands::cmd_forward(&args.into_run_args()),
        Command::Inverse(args) => commands::cmd_inverse(&args.into_run_args()),
        Command::Synth(args) => commands::cmd_synth(&args.into_run_args()),
        Command::Gradcheck { seed } => commands::cmd_gradcheck(seed),
        Command::Compare(args) => commands::cmd_compare(&args.into_run_args()),
        Command::Sweep(args) => commands::cmd_sweep(&args.into_run_args()),
    };
    if let Err(err) = result {
        eprintln!("error: {}", err.message());
        std::process::exit(err.exit_code());
    }
}
