use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse grouping of errors, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad parameters or inconsistent flags.
    Usage,
    /// The entropy profile has no drop above the requested threshold.
    NoCollapse,
    /// Malformed, missing or inconsistent input data.
    Data,
    /// Numerical failure (non-convergence, non-finite values, broken invariants).
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("npy format error: {0}")]
    Format(String),

    #[error("unsupported npy layout: {0}")]
    UnsupportedLayout(String),

    #[error("truncated npy payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Wraps an error with the sample/layer/file it came from.
    #[error("{location}: {source}")]
    At {
        location: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("matrix is not symmetric (max |a_ij - a_ji| = {0:e})")]
    NotSymmetric(f64),

    #[error("Jacobi eigensolver did not converge within {0} sweeps")]
    NoConvergence(usize),

    #[error("eigenvalue {0:e} is more negative than the clamp tolerance")]
    NegativeEigenvalue(f64),

    #[error("spectrum sums to {0}, expected 1")]
    NotNormalized(f64),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("no collapse detected: largest drop {max_drop} is below threshold {threshold}")]
    NoCollapse { max_drop: f64, threshold: f64 },

    #[error("numeric overflow at layer {layer}: {what} is not finite")]
    NumericOverflow { layer: usize, what: String },

    #[error("{what} disagree by {diff:e}")]
    Mismatch { what: String, diff: f64 },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn at(self, location: impl Into<String>) -> Self {
        Error::At {
            location: location.into(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Format(_)
            | Error::UnsupportedLayout(_)
            | Error::Truncated { .. }
            | Error::Io { .. }
            | Error::Manifest(_)
            | Error::Shape(_)
            | Error::NonFinite(_) => ErrorClass::Data,
            Error::At { source, .. } => source.class(),
            Error::Parameter(_) | Error::Degenerate(_) => ErrorClass::Usage,
            Error::NoCollapse { .. } => ErrorClass::NoCollapse,
            Error::NotSymmetric(_)
            | Error::NoConvergence(_)
            | Error::NegativeEigenvalue(_)
            | Error::NotNormalized(_)
            | Error::NumericOverflow { .. }
            | Error::Mismatch { .. } => ErrorClass::Numeric,
        }
    }

    /// Innermost error, skipping location wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::At { source, .. } => source.root(),
            other => other,
        }
    }
}
