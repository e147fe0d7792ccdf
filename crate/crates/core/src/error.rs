use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library. The CLI maps each category onto a
/// distinct exit status.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error in `{section}`: {message}")]
    Config { section: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("run diverged at global step {step}")]
    Diverged { step: u64 },

    #[error("non-finite parameter vector passed to {0}")]
    NonFinite(&'static str),

    #[error("step size {gamma} violates the bound condition (must be < {max_gamma})")]
    StepSizeCondition { gamma: f64, max_gamma: f64 },

    #[error("no admissible step size: every grid point diverged or never reached the target")]
    NoAdmissibleStepSize,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse category used for exit codes and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Numeric,
    Io,
}

impl Error {
    pub fn config(section: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            section: section.into(),
            message: message.into(),
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
            Error::Config { .. } | Error::InvalidArgument(_) => ErrorCategory::Config,
            Error::Diverged { .. }
            | Error::NonFinite(_)
            | Error::StepSizeCondition { .. }
            | Error::NoAdmissibleStepSize => ErrorCategory::Numeric,
            Error::Io { .. } => ErrorCategory::Io,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
