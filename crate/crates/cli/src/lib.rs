//! Config loading and verb dispatch for the `skewstab` binary.

pub mod config;
pub mod run;

pub use config::{load_config, parse_config, ConfigError, RunConfig};
pub use run::{run, Outcome, RunError, Verb};
