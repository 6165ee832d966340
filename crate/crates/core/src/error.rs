use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("conditioning block is singular or ill-conditioned ({0})")]
    SingularConditioningBlock(String),

    #[error("index set is empty")]
    EmptyIndexSet,

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("given and target index sets overlap at index {0}")]
    OverlappingIndexSets(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("covariance is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("covariance is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, tolerance {tolerance:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64, tolerance: f64 },

    #[error("step {step} out of range 1..={horizon}")]
    StepOutOfRange { step: usize, horizon: usize },

    #[error("invalid autoregressive form: {0}")]
    InvalidAutoregressiveForm(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("kernel covariance matrix is not positive definite")]
    DegenerateKernelMatrix,

    #[error("marginal law is degenerate: {0}")]
    DegenerateMarginal(String),

    #[error("future-given-past covariance is singular at step {step}")]
    SingularFutureCovariance { step: usize },

    #[error("no convergence after {sweeps} sweeps (last change {distance:e})")]
    NotConverged { sweeps: usize, distance: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;
