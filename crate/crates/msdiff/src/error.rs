use thiserror::Error;

/// A config that could not be read or violates a physical invariant.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{invariant} violated{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Validation { line: Option<usize>, invariant: &'static str, message: String },
}

impl ConfigError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Parse { line, .. } => Some(*line),
            ConfigError::Validation { line, .. } => *line,
        }
    }

    /// Machine-readable form written on stderr by the CLI.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            ConfigError::Parse { line, column, message } => serde_json::json!({
                "error": "parse",
                "line": line,
                "column": column,
                "message": message,
            }),
            ConfigError::Validation { line, invariant, message } => serde_json::json!({
                "error": "validation",
                "line": line,
                "invariant": invariant,
                "message": message,
            }),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical error: {0}")]
    Core(#[from] msdiff_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed snapshot: {0}")]
    Format(String),
}

pub type RunResult<T> = std::result::Result<T, RunError>;
