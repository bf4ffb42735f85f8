//! File formats, configuration, experiment drivers and the command line of
//! the `scdetect` side-channel detector simulator.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod report;
pub mod thresholds_io;
pub mod trace_io;

use thiserror::Error;

/// Top-level failure, mapped to the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, arguments or input files.
    #[error("{0}")]
    Config(String),
    /// A violated internal invariant.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<experiments::ExperimentError> for CliError {
    fn from(e: experiments::ExperimentError) -> Self {
        use experiments::ExperimentError as E;
        use scdetect_core::SimError;
        match e {
            E::Simulation(SimError::Overflow { .. }) => CliError::Internal(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o error: {e}"))
    }
}
