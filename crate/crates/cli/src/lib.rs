//! Experiment runner for `fraczakai`: config parsing, dispatch to the
//! solvers, CSV and summary output, and the acceptance suite.

pub mod config;
pub mod expr;
pub mod output;
pub mod run;
pub mod suite;

pub use config::{parse_config, ConfigError, ConfigErrors, ExperimentConfig, RunKind};
pub use run::{run_experiment, RunError};

/// Environment variable that overrides the output directory.
pub const OUT_ENV: &str = "FRACZAKAI_OUT";
