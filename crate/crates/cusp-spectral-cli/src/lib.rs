//! Experiment runner behind the `cusp-spectral` binary.

pub mod config;
pub mod output;
pub mod run;

use thiserror::Error;

pub use config::{Command, ExperimentConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("tolerance failure: {0}")]
    Tolerance(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Tolerance(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Tolerance(_) => "tolerance",
            CliError::Internal(_) => "internal",
        }
    }

    /// One-line JSON diagnostic.
    pub fn diagnostic(&self) -> String {
        let msg = match self {
            CliError::Validation(m) | CliError::Tolerance(m) | CliError::Internal(m) => m,
        };
        serde_json::json!({ "error": self.kind(), "exit_code": self.exit_code(), "message": msg }).to_string()
    }
}

impl From<cusp_spectral::Error> for CliError {
    fn from(e: cusp_spectral::Error) -> Self {
        use cusp_spectral::Error as E;
        match e {
            E::Internal(_) | E::Integration(_) | E::NonTermination(_) => CliError::Internal(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(format!("I/O: {e}"))
    }
}
