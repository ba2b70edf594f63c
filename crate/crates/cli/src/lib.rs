//! Configuration and orchestration behind the `limitset` binary.

pub mod config;
pub mod experiment;

pub use config::{parse_config, ConfigError, ExperimentConfig};
pub use experiment::{run_experiment, Command, Outcome};
