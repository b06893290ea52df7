use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// Variants are split between caller mistakes (`Precondition`, `Input`,
/// `Unsupported`, `Config`) and failures that happen while running
/// (`Calibration`, `Io`, `Format`, `Incompatible`). The CLI maps the first
/// group to exit code 1 and the second to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("incompatible artifact: {0}")]
    Incompatible(String),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad arguments or bad input data, as opposed
    /// to failures while executing a well-formed request.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Precondition(_) | Error::Input(_) | Error::Unsupported(_) | Error::Config(_)
        )
    }

    /// Short machine-readable category tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Precondition(_) => "precondition",
            Error::Input(_) => "input",
            Error::Unsupported(_) => "unsupported",
            Error::Config(_) => "config",
            Error::Calibration(_) => "calibration",
            Error::Incompatible(_) => "incompatible",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
