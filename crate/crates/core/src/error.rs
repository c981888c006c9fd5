use thiserror::Error;

/// Errors raised by the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("outside domain: {0}")]
    Domain(String),

    #[error("series violates the reality condition: imaginary residue {residue:e} exceeds {tolerance:e}")]
    CorruptSeries { residue: f64, tolerance: f64 },

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("the zero vector is not periodic")]
    ZeroVector,

    #[error("search exhausted after {candidates} candidates: {detail}")]
    SearchExhausted { candidates: usize, detail: String },

    #[error("frequency vectors are linearly dependent")]
    DependentVectors,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("averaging diverged at iteration {iteration}: remainder {previous:e} -> {current:e}")]
    Divergence {
        iteration: usize,
        previous: f64,
        current: f64,
        trace: Vec<f64>,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
