//! Error type shared by all modules.

use std::fmt;

/// Errors surfaced by detectors, channels, and the harness.
#[derive(Debug)]
pub enum Error {
    /// Dimension or shape mismatch. The string names the offending call.
    Dim(String),
    /// A matrix expected to be symmetric positive definite was not.
    NotSpd(String),
    /// An argument was outside its domain (e.g. a non-positive rate).
    Domain(String),
    /// A message vector became identically zero at the given time index.
    ZeroMessage { index: usize },
    /// An exhaustive enumeration was refused because the instance is too big.
    TooLarge(String),
    /// A likelihood evaluation returned NaN.
    NanLikelihood { index: usize },
    /// Training produced a NaN loss.
    NanLoss { epoch: usize, batch: usize },
    /// A checkpoint was written with an unsupported format version.
    VersionMismatch { expected: u32, found: u32 },
    /// A checkpoint holds a different detector kind than requested.
    KindMismatch { expected: String, found: String },
    /// Malformed input file or config.
    Parse(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dim(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::NotSpd(msg) => write!(f, "matrix not symmetric positive definite: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::ZeroMessage { index } => {
                write!(f, "message vector is identically zero at index {index}")
            }
            Error::TooLarge(msg) => write!(f, "instance too large for exhaustive search: {msg}"),
            Error::NanLikelihood { index } => {
                write!(f, "likelihood returned NaN at index {index}")
            }
            Error::NanLoss { epoch, batch } => {
                write!(f, "training loss became NaN at epoch {epoch}, batch {batch}")
            }
            Error::VersionMismatch { expected, found } => write!(
                f,
                "checkpoint format version {found} not supported (expected {expected})"
            ),
            Error::KindMismatch { expected, found } => write!(
                f,
                "checkpoint holds detector kind '{found}', expected '{expected}'"
            ),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
