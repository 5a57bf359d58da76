use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("point outside the unit cube: coordinate {coordinate} = {value}")]
    Domain { coordinate: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("enumeration budget exceeded: {required} subsamples requested, limit is {limit}")]
    Budget { required: u128, limit: u128 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
