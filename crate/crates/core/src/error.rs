use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Numerical,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Validation => 2,
            ErrorCategory::Numerical => 3,
            ErrorCategory::Io => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Validation => "validation",
            ErrorCategory::Numerical => "numerical",
            ErrorCategory::Io => "io",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Validation { what: &'static str, reason: String },

    #[error(
        "charge-basis truncation not converged: gap {coarse_ghz} GHz at cutoff {cutoff}, \
         {fine_ghz} GHz at cutoff {doubled}"
    )]
    Convergence {
        cutoff: usize,
        doubled: usize,
        coarse_ghz: f64,
        fine_ghz: f64,
    },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    Eigensolver { iterations: usize, residual: f64 },

    #[error("query ({alpha}, {beta1}, {beta2}) outside lookup table range")]
    OutOfRange { alpha: f64, beta1: f64, beta2: f64 },

    #[error("lookup table rejected: worst relative error {worst:e} exceeds {limit:e}")]
    LookupRejected { worst: f64, limit: f64 },

    #[error("lookup cache {path}: {reason}")]
    Cache { path: PathBuf, reason: String },

    #[error("no flux column produced a converged fit")]
    EmptyProfile,

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            what,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Validation { .. } | Error::Config(_) | Error::Parse { .. } => {
                ErrorCategory::Validation
            }
            Error::Convergence { .. }
            | Error::Eigensolver { .. }
            | Error::OutOfRange { .. }
            | Error::LookupRejected { .. }
            | Error::EmptyProfile => ErrorCategory::Numerical,
            Error::Cache { .. } | Error::Io { .. } => ErrorCategory::Io,
        }
    }
}
