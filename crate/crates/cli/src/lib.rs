//! Experiment driver behind the `metacog` binary: corpus synthesis, model
//! evaluation, aggregate reports and ingestion of external percept logs.

pub mod commands;
pub mod config;
pub mod error;
pub mod table;

pub use config::{ExperimentConfig, OutputFormat};
pub use error::{CliError, CliResult};
