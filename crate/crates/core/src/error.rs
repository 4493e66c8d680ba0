use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not square: {rows} rows of which one has {cols} columns")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension must be at least 1")]
    EmptyDimension,

    #[error("non-finite entry at position {index}")]
    NonFinite { index: usize },

    #[error("quadrature order {0} outside 1..=512")]
    QuadratureOrder(usize),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("unsupported for this ensemble family: {0}")]
    Unsupported(String),

    #[error("dimension {dim} too large to materialize (limit {limit})")]
    TooLarge { dim: usize, limit: usize },

    #[error("subset enumeration limited to k <= {limit}, got k = {k}")]
    EnumerationTooLarge { k: usize, limit: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
