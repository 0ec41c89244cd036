//! Library side of the `pimolap` command: configuration, data sources,
//! reports and the `gen`/`load`/`run`/`bench` commands.

pub mod commands;
pub mod config;
pub mod data;
pub mod report;

use thiserror::Error;

pub use commands::{cmd_bench, cmd_gen, cmd_load, cmd_run, RunOutput};
pub use config::{CircuitKind, EngineKind, Geometry, LayoutKind, RunConfig};
pub use data::Dataset;
pub use report::{geo_mean, BenchReport, BenchSummary, ConfigSummary, RunReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Parse(#[from] pimolap_core::ParseError),
    #[error("{0}")]
    Engine(String),
    #[error(transparent)]
    Schema(#[from] pimolap_core::SchemaError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: invalid JSON: {message}")]
    Json { path: String, message: String },
}

impl CliError {
    /// Process exit code: 2 for usage and parse errors, 3 for planning or
    /// execution errors, 1 for data and I/O errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse(_) => 2,
            CliError::Engine(_) => 3,
            CliError::Schema(_) | CliError::Io { .. } | CliError::Json { .. } => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}

impl From<pimolap_core::EngineError> for CliError {
    fn from(e: pimolap_core::EngineError) -> Self {
        CliError::Engine(e.to_string())
    }
}

impl From<pimolap_core::LayoutError> for CliError {
    fn from(e: pimolap_core::LayoutError) -> Self {
        CliError::Engine(e.to_string())
    }
}
