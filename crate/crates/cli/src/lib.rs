//! Experiment runner for the logbsde laboratory: TOML configs, a registry of
//! built-in scenarios and CSV/JSON outputs.

pub mod config;
pub mod error;
pub mod output;
pub mod pipelines;
pub mod runner;
pub mod scenarios;

pub use config::{parse_config, ExperimentConfig, PipelineConfig};
pub use error::CliError;
pub use output::{exit_code, ResultRecord};
pub use runner::{output_root, run_many, run_scenario};
