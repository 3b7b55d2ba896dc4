//! Command-line front-end: versioned CSV ingestion, TOML run configuration
//! and the `simulate`, `predict`, `tune`, `evaluate` and `inspect-graph`
//! commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod stream;

pub use config::RunConfig;
pub use error::{CliError, Result};
