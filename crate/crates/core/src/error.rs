use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e} at or below tolerance {tolerance:e})")]
    NotPositiveDefinite {
        pivot: usize,
        value: f64,
        tolerance: f64,
    },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e} exceeds {tolerance:e})")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("k = {k} exceeds the number of points n = {n}")]
    KExceedsN { k: usize, n: usize },

    #[error("symmetric eigensolver did not converge")]
    EigenFailure,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("lag too large: lag {lag} needs at least {} time steps, got {t}", lag + 2)]
    LagTooLarge { lag: usize, t: usize },

    #[error("degenerate output: {0}")]
    DegenerateOutput(String),

    #[error("constant series has zero variance")]
    ConstantSeries,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate groups: {0}")]
    DegenerateGroups(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("malformed tensor file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
