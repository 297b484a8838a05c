//! Crate-wide error type.
//!
//! Numerical routines return `Result` instead of panicking so that callers
//! (in particular the CLI) can distinguish configuration mistakes from
//! genuine numerical failures.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while setting up or evaluating a problem.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A point fell on or outside the open domain box of a chart.
    #[error("point {point:?} is not strictly inside the domain of chart '{chart}'")]
    OutsideDomain { chart: String, point: Vec<f64> },

    /// A chart kind/dimension combination the crate does not support.
    #[error("unsupported chart: {0}")]
    UnsupportedChart(String),

    /// Scalar curvature requested on a chart where it is not defined.
    #[error("scalar curvature is not defined for chart '{chart}'")]
    CurvatureUndefined { chart: String },

    /// Two objects built over different charts were mixed.
    #[error("chart mismatch: expected '{expected}', got '{got}'")]
    ChartMismatch { expected: String, got: String },

    /// An evaluation produced NaN or infinity.
    #[error("non-finite value during {context} at {at:?}")]
    NonFinite { context: String, at: Vec<f64> },

    /// A constructor received arguments violating its documented contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A requested level or event was not reached by a computed solution.
    #[error("level {level} is not attained within the integrated range")]
    LevelNotAttained { level: f64 },

    /// A root or event bracket could not be established.
    #[error("bracketing failed: {0}")]
    BracketingFailed(String),
}
