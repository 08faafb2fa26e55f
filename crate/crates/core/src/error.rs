use thiserror::Error;

/// Errors raised by the sampling toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is indefinite (pivot {pivot} = {value:e} below tolerance {tolerance:e})")]
    IndefiniteMatrix {
        pivot: usize,
        value: f64,
        tolerance: f64,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("no contraction: gamma^2 = {gamma_sq} <= M = {big_m}")]
    NoContraction { gamma_sq: f64, big_m: f64 },

    #[error("decay not asymptotic: fit residual {residual:e} exceeds {threshold:e}")]
    NotAsymptotic { residual: f64, threshold: f64 },

    #[error("quadrature failed to converge after {nodes} nodes (last change {change:e})")]
    QuadratureDiverged { nodes: usize, change: f64 },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg()))
    }
}
