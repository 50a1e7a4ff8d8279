//! Experiment runner: configuration, replica sweeps, CSV/JSONL output and
//! the property battery.

pub mod check;
pub mod cli;
pub mod config;
pub mod output;
pub mod runner;

use thiserror::Error;

/// Failure classes, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("property failure: {0}")]
    Property(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Property(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<gibbslz::Error> for CliError {
    fn from(e: gibbslz::Error) -> Self {
        match e {
            gibbslz::Error::Numeric(m) => CliError::Numeric(m),
            other => CliError::Config(other.to_string()),
        }
    }
}
