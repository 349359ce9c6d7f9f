use thiserror::Error;

/// Errors raised by the LIBSVM reader.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("empty input: no samples found")]
    Empty,
    #[error("malformed token `{token}` at line {line}")]
    MalformedToken { line: usize, token: String },
    #[error("invalid label `{token}` at line {line}")]
    BadLabel { line: usize, token: String },
    #[error("index < 1 at line {line}")]
    IndexTooSmall { line: usize },
    #[error("non-increasing index at line {line}")]
    NonIncreasingIndex { line: usize },
    #[error("index {index} exceeds the requested dimension {dim} at line {line}")]
    IndexOutOfRange { line: usize, index: usize, dim: usize },
    #[error("comments are not supported (line {line})")]
    Comment { line: usize },
    #[error("read error at line {line}: {message}")]
    Io { line: usize, message: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sample index {index} out of range for {n} samples")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("label {label} at sample {index} cannot be mapped to a binary class")]
    BadLabel { index: usize, label: f64 },
    #[error("dense Hessian refused: dimension {d} exceeds the cap {cap}")]
    DenseCapExceeded { d: usize, cap: usize },
    #[error("non-finite entries in matrix")]
    NonFinite,
    #[error("power iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("reference solver exceeded {passes:.0} datapasses (gradient norm {grad_norm:e})")]
    IterationCap { passes: f64, grad_norm: f64 },
    #[error("only {available} directions available for rank {k}; use a Gaussian basis instead")]
    TooFewDirections { available: usize, k: usize },
    #[error("snapshot model does not match method {0}")]
    ModelMismatch(String),
    #[error("mean Hessian is numerically zero")]
    DegenerateHessian,
}

pub type Result<T> = std::result::Result<T, Error>;
