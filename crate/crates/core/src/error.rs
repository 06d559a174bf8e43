use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid algebra: {0}")]
    InvalidAlgebra(String),
    #[error("algebra mismatch: expected `{expected}`, got `{got}`")]
    AlgebraMismatch { expected: String, got: String },
    #[error("element is not Hermitian (residual {0:.3e})")]
    NotHermitian(f64),
    #[error("unitality violated in M-block column {column}: sum of lambda_ij * n_i = {got}, block dimension {expected}")]
    Unitality { column: usize, expected: usize, got: usize },
    #[error("inclusion matrix has a zero column at index {0}")]
    ZeroColumn(usize),
    #[error("invalid inclusion: {0}")]
    InvalidInclusion(String),
    #[error("density rejected: {0}")]
    InvalidDensity(String),
    #[error("not a conditional expectation: {0}")]
    NotExpectation(String),
    #[error("numerically degenerate: {0}")]
    Degenerate(String),
    #[error("inclusion is not connected; the minimizer is not unique")]
    NotConnected,
    #[error("inconsistent linear system (residual {0:.3e})")]
    Inconsistent(f64),
    #[error("tolerance violated: {0}")]
    Tolerance(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("type error: {0}")]
    Type(String),
    #[error("unbound name `{0}`")]
    Unbound(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
