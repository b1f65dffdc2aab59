//! Configuration, orchestration and persistence for `qrc-sensor`.

pub mod artifacts;
pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;

pub use cli::{execute, Cli};
pub use config::ExperimentConfig;
pub use error::CliError;
