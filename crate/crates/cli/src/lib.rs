//! Config-driven runner for Boltzmann echo experiments.

pub mod config;
pub mod run;

pub use config::{parse_config, ConfigError, ExperimentConfig, ExperimentKind};
pub use run::{estimate, load_config, resolve, run, RunError, RunOptions, CSV_HEADER};
