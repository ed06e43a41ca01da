use thiserror::Error;

/// Errors raised by the solvers and the learner.
#[derive(Debug, Error)]
pub enum SlqrError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric: max asymmetry {0:.3e}")]
    NotSymmetric(f64),

    #[error("non-finite entry encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is singular to working tolerance")]
    Singular,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("gain is not admissible: spectral radius of closed-loop moment matrix is {rho:.6}")]
    NotAdmissible { rho: f64 },

    #[error("no unique SLE solution: gamma * rho(M) = {0:.6} >= 1")]
    NoUniqueSolution(f64),

    #[error("insufficient excitation: rank of regression matrix below {required} (smallest/largest singular value ratio {ratio:.3e}); increase probe_std or rollout length")]
    Excitation { required: usize, ratio: f64 },

    #[error("policy evaluation failed at iteration {iteration}: {reason}")]
    EvaluationFailure { iteration: usize, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, SlqrError>;
