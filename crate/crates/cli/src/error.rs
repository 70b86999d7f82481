use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// I/O failures and engine errors that are not validity violations.
    pub const RUNTIME: i32 = 1;
    /// Command-line usage errors (reported by clap).
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    /// Requested time past the validity threshold, or a momentum grid
    /// reaching the first-order bound.
    pub const VALIDITY: i32 = 4;
    pub const GATE: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("config field `{field}`: {source}")]
    Field {
        field: String,
        source: survival_core::Error,
    },

    #[error("validity violation: {0}")]
    Validity(survival_core::Error),

    #[error("{context}: {source}")]
    Engine {
        context: String,
        source: survival_core::Error,
    },

    #[error("{count} comparison gate(s) failed: {summary}")]
    Gate { count: usize, summary: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Field { .. } => exit::CONFIG,
            CliError::Validity(_) => exit::VALIDITY,
            CliError::Gate { .. } => exit::GATE,
            CliError::Engine { .. } | CliError::Io { .. } | CliError::Output(_) => exit::RUNTIME,
        }
    }

    /// Wraps an engine error, routing validity violations to their own variant.
    pub fn engine(context: impl Into<String>, source: survival_core::Error) -> Self {
        if source.is_validity() {
            CliError::Validity(source)
        } else {
            CliError::Engine {
                context: context.into(),
                source,
            }
        }
    }

    pub fn field(field: impl Into<String>, source: survival_core::Error) -> Self {
        if source.is_validity() {
            CliError::Validity(source)
        } else {
            CliError::Field {
                field: field.into(),
                source,
            }
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
