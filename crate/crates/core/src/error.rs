use thiserror::Error;

/// Errors raised by the numerical kernels and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("level inversion did not converge for z = {z} after {iterations} iterations")]
    InversionDiverged { z: f64, iterations: usize },

    #[error("kernel is singular at the origin and cannot be evaluated there")]
    SingularKernel,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("eigendecomposition did not converge after {sweeps} sweeps")]
    EigenDiverged { sweeps: usize },

    #[error("non-finite entry encountered")]
    NonFinite,

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("grid index ({i}, {j}) out of range for M = {m}")]
    IndexOutOfRange { i: i64, j: i64, m: usize },

    #[error("noise address out of horizon: level {level}, step {step}")]
    OutOfHorizon { level: u32, step: u64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("slope fit requires at least 2 rows with positive errors")]
    UnfittableTable,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
