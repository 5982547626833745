//! Config-driven experiment harness: train, unlearn, simulate and report.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::{build_world, cmd_report, cmd_simulate, cmd_train, cmd_unlearn, read_model, World};
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use manifest::{RunManifest, MANIFEST_FILE};
