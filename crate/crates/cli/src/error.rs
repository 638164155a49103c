//! CLI error classification and exit codes.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Malformed JSON (exit 2).
    Syntax(String),
    /// Schema violation: wrong shape, unknown keys, bad value ranges (exit 3).
    Schema(String),
    /// Semantic violation from graph/scm validation (exit 4).
    Semantic(String),
    /// Anything else (exit 1).
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Syntax(_) => 2,
            CliError::Schema(_) => 3,
            CliError::Semantic(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Syntax(m) => write!(f, "malformed JSON: {m}"),
            CliError::Schema(m) => write!(f, "schema violation: {m}"),
            CliError::Semantic(m) => write!(f, "semantic violation: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<pig_core::Error> for CliError {
    fn from(e: pig_core::Error) -> Self {
        match e {
            pig_core::Error::Validation(m) => CliError::Semantic(m),
            pig_core::Error::Input(m) => CliError::Semantic(m),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
