//! Experiment runner for the `oversmooth` engine: single runs, depth × λ_w
//! sweeps, checkpoint inspection and synthetic dataset generation.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{cmd_gen, cmd_inspect, cmd_stats, cmd_sweep, cmd_train, GlobalOpts};
pub use config::{RunConfig, SweepConfig};
pub use error::CliError;
pub use output::RunSummary;
