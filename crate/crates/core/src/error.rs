use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    BadGrid(String),

    #[error("non-positive base in fractional power (min value {min})")]
    FractionalPowerOfNonPositive { min: f64 },

    #[error("field must be strictly positive (min value {min} in {what})")]
    NonPositiveField { what: String, min: f64 },

    #[error("metric is not positive definite at grid index {index}")]
    NotPositiveDefinite { index: usize },

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed field file header: {0}")]
    MalformedHeader(String),

    #[error("field file payload mismatch: expected {expected} values, found {found}")]
    PayloadSizeMismatch { expected: usize, found: usize },

    #[error("field file contains non-finite values")]
    NonFinitePayload,

    #[error("singular Gram matrix in weighted projection")]
    SingularGram,

    #[error("conjugate gradient did not converge: relative residual {rel_residual:.3e} after {iterations} iterations")]
    CgNoConvergence { iterations: usize, rel_residual: f64 },

    #[error("conjugate gradient stagnated at relative residual {rel_residual:.3e} (iteration {iterations})")]
    CgStagnation { iterations: usize, rel_residual: f64 },

    #[error("kernel detection ambiguous: {0}")]
    KernelDetection(String),

    #[error("right-hand side violates the kernel compatibility condition; defects: {defects:?}")]
    IncompatibleRhs { defects: Vec<f64> },

    #[error("input tensor is not trace-free: relative trace {trace_rel:.3e} exceeds {tol:.3e}")]
    TraceViolation { trace_rel: f64, tol: f64 },

    #[error("Newton iteration diverged after {iterations} iterations (relative residual {rel_residual:.3e})")]
    NewtonDiverged { iterations: usize, rel_residual: f64 },

    #[error("Newton step cannot keep the conformal factor positive (iteration {iterations})")]
    PositivityLoss { iterations: usize },

    #[error("no positive solution: {0}")]
    NoPositiveSolution(String),

    #[error("scale rule evaluation failed: {0}")]
    RuleEvaluation(String),

    #[error("outer fixed-point iteration did not converge after {iterations} iterations (last relative change {last_change:.3e})")]
    OuterNoConvergence { iterations: usize, last_change: f64 },
}
