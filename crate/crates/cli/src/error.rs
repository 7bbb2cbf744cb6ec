use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config validation failed")]
    Validation(Vec<Diagnostic>),

    #[error("{0}")]
    Usage(String),

    #[error("refusing to overwrite {dir}: it holds results of config {found}, this config hashes to {expected}")]
    Mismatch { dir: String, found: String, expected: String },

    #[error(transparent)]
    Core(#[from] incentive_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Usage(_) => 2,
            CliError::Mismatch { .. } => 3,
            _ => 1,
        }
    }
}
