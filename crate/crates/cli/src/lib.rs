//! Config ingestion, command dispatch and file output for the `rigidlim`
//! binary.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{run, Command, Options, Outcome};
pub use config::{ConfigError, LoadedConfig, SystemConfig};
pub use report::Report;
