use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no points")]
    NoPoints,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("inconsistent dimension at line {line}: expected {expected}, found {found}")]
    Dimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at line {line}")]
    NonFinite { line: usize },
    #[error("invalid distance matrix: {0}")]
    InvalidDistance(String),
    #[error("{what} = {value} out of range {range}")]
    OutOfRange {
        what: &'static str,
        value: i64,
        range: String,
    },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
    #[error("dimension {dim} exceeds limit {limit} for {what}")]
    TooLarge {
        what: &'static str,
        dim: usize,
        limit: usize,
    },
    #[error("missing moments: need index {need}, have {have}")]
    MissingMoments { need: usize, have: usize },
    #[error("invalid parameter {name}: {msg}")]
    InvalidParameter { name: &'static str, msg: String },
    #[error("qubit index {index} out of range for {n} qubits")]
    QubitOutOfRange { index: usize, n: usize },
    #[error("spectral threshold undefined for a zero operator")]
    UndefinedDelta,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn out_of_range(what: &'static str, value: i64, lo: i64, hi: i64) -> Error {
    Error::OutOfRange {
        what,
        value,
        range: format!("{lo}..={hi}"),
    }
}
