use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("operand belongs to grid #{found}, expected grid #{expected}")]
    GridMismatch { expected: u64, found: u64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("dense oracle limited to {cap} unknowns, problem has {size}")]
    OracleTooLarge { size: usize, cap: usize },

    #[error("dense oracle system is singular")]
    SingularSystem,

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("sub-problem {index} on [{t_start}, {t_end}] failed: {source}")]
    Subproblem {
        index: usize,
        t_start: f64,
        t_end: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
