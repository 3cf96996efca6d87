use thiserror::Error;

/// Errors produced by scene construction, scheme evaluation, and estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("truncation leakage {leakage:.3e} exceeds tolerance {tolerance:.3e}; increase the mode-basis dimension")]
    Truncation { leakage: f64, tolerance: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("negative probability {value:.3e} at outcome {index} exceeds clamp tolerance")]
    NegativeProbability { index: usize, value: f64 },

    #[error("derivative has magnitude {magnitude:.3e} outside the support of the correlation matrix")]
    SupportViolation { magnitude: f64 },

    #[error("quadrature failed to converge: relative change {last_change:.3e} after {levels} refinement levels")]
    QuadratureNonConvergence { last_change: f64, levels: u32 },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:.3e})")]
    Singular { condition: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
