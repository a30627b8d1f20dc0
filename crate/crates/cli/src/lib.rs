//! Command-line front end for regularization graphs: JSON run
//! configurations, signal I/O and the command runners.

pub mod commands;
pub mod config;
pub mod graph_io;
pub mod io;
pub mod verify;

pub use commands::{run, Outcome, RunError};
pub use config::{parse_config, ConfigError, RunConfig};
