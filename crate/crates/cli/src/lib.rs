//! Experiment driver for `gradflow`: configuration layering, the four
//! subcommands and their CSV artifacts.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_accuracy_space, cmd_accuracy_time, cmd_complexity, cmd_run, execute, Outcome, RunSummary};
pub use config::{Command, FreeRun, Overrides, RunConfig};
pub use error::{CliError, Result};
