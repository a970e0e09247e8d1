use std::path::Path;

use thiserror::Error;

/// Failures mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, missing or malformed inputs, incompatible artifacts.
    #[error("{0}")]
    Input(String),
    /// The command started but could not finish (divergence, write failure).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Input(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

impl From<cmert::Error> for CliError {
    fn from(e: cmert::Error) -> Self {
        use cmert::Error::*;
        match e {
            Diverged { .. } | NonFiniteGrad(_) | Io(_) | FullyMaskedRow { .. } => Self::Runtime(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches the offending path to an input error.
pub fn input_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}
