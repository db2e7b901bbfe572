use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gradflow_cli::{execute, CliError, Command, Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "gradflow", version, about = "SAV-DG solver experiments for fourth-order gradient flows")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Spatial convergence sweep; writes errors.csv.
    AccuracySpace(Overrides),
    /// Temporal convergence sweep per scheme order; writes errors_order<o>.csv.
    AccuracyTime(Overrides),
    /// Wall-clock time per strategy and mesh; writes timing.csv.
    Complexity(Overrides),
    /// Free Swift-Hohenberg run; writes energy.csv and snapshots/.
    Run(Overrides),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Sub::AccuracySpace(o) => (Command::AccuracySpace, o),
        Sub::AccuracyTime(o) => (Command::AccuracyTime, o),
        Sub::Complexity(o) => (Command::Complexity, o),
        Sub::Run(o) => (Command::Run, o),
    };
    let result = RunConfig::resolve(command, flags).and_then(|(config, out)| execute(&config, out.as_deref()));
    match result {
        Ok(outcome) => {
            println!("{}", outcome.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
