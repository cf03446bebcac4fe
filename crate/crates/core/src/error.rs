use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cannot parse rational from {0:?}")]
    ParseRational(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("outcome index {h} out of range 1..={max}")]
    IndexOutOfRange { h: usize, max: usize },

    #[error("lag order p={0} is not supported here")]
    UnsupportedLag(usize),

    #[error("fixed-effect draws are not pairwise distinct")]
    DuplicateDraws,

    #[error("expected {expected} fixed-effect draws, got {got}")]
    DrawCount { expected: usize, got: usize },

    #[error("row budget {rows} is below the required {required}")]
    BudgetTooSmall { rows: usize, required: usize },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("basis validation failed at u={u}, column {column}: residual {residual}")]
    ValidationFailed {
        u: String,
        column: usize,
        residual: String,
    },

    #[error("numerical nullspace has dimension {numeric}, exact certificate says {exact}")]
    DimensionMismatch { numeric: usize, exact: usize },

    #[error("model is not identified: {0}")]
    Unidentified(String),

    #[error("non-finite value {0}")]
    NonFinite(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
