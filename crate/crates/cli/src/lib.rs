//! Configuration loading, command dispatch and JSON reports for the
//! `algcalc` verifier.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{run_command, Command, ConnectionKind, RunError, RunOptions};
pub use config::{load_config, parse_config, ConfigError, GeometryConfig};
pub use report::Report;
