use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("index {index} out of range 0..{bound}")]
    OutOfRange { index: usize, bound: usize },
    #[error("empty fit window: every sample is below the noise floor")]
    EmptyWindow,
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("step size underflow: h = {0:e}")]
    StepUnderflow(f64),
    #[error("matrix is not Hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error("no eigenvalue pairing exists: {0}")]
    NoPairing(String),
}
