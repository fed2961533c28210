use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),

    #[error("{name} out of range: got {value}, expected {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("sample is constant (zero variance)")]
    ConstantSample,

    #[error("sample size {n} outside supported range {min}..={max}")]
    SampleSize { n: usize, min: usize, max: usize },

    #[error("prior not supported for this operation: {0}")]
    UnsupportedPrior(String),

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("possible impropriety of the partial posterior: {0}")]
    PossibleImpropriety(String),

    #[error("iteration failed to converge in {0}")]
    NoConvergence(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 parse/validation, 3 sampler, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Json(_) => 4,
            Error::Sampler(_) | Error::PossibleImpropriety(_) | Error::NoConvergence(_) => 3,
            _ => 2,
        }
    }
}
