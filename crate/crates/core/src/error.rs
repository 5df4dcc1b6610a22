use thiserror::Error;

use crate::report::FitReport;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape, mode, or argument outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value at flat offset {offset}")]
    NonFinite { offset: usize },

    /// A factor column collapsed to zero, so it cannot be normalized.
    #[error("degenerate component: column {index} of factor mode {mode} is zero")]
    DegenerateComponent { mode: usize, index: usize },

    #[error("cannot center across mode {mode}: extent is 1")]
    DegenerateCentering { mode: usize },

    #[error("slice {index} orthogonal to mode {mode} has zero standard deviation")]
    ZeroVarianceSlice { mode: usize, index: usize },

    #[error("matrix row {row} is constant or too short to standardize")]
    ConstantRow { row: usize },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("no start converged ({} starts attempted)", .0.starts.len())]
    FitFailure(Box<FitReport>),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
