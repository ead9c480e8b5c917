use thiserror::Error;

/// Failures raised by the library. Each variant maps onto one CLI exit class
/// through [`Error::class`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario rejected: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),
    #[error("length mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("tridiagonal solve met a vanishing pivot at row {row}")]
    ZeroPivot { row: usize },
    #[error("rank-one correction is singular (denominator {0:e})")]
    SingularCorrection(f64),
    #[error("eigen solver failed on mode {mode}")]
    Eigen { mode: usize },
    #[error("Picard iteration on the nonlocal argument stalled at step {step} (|dg| = {residual:e})")]
    Picard { step: usize, residual: f64 },
    #[error("coupled fixed point stalled after {iterations} iterations (residual {residual:e})")]
    FixedPoint { iterations: usize, residual: f64, history: Vec<f64> },
    #[error("weight construction failed: {0}")]
    Weights(String),
    #[error("conjugate gradient stagnated after {iterations} iterations (relative residual {residual:e})")]
    Cg { iterations: usize, residual: f64, history: Vec<f64> },
    #[error("outer iteration diverged after {iterations} iterations; try a smaller initial datum")]
    Divergence { iterations: usize, history: Vec<f64> },
    #[error(
        "outer iteration reached {iterations} iterations without meeting the tolerance (last residual {residual:e})"
    )]
    OuterLimit { iterations: usize, residual: f64, history: Vec<f64> },
    #[error("output failure: {0}")]
    Output(String),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    NonConvergence,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } | Error::Parse(_) | Error::InvalidScenario(_) => ErrorClass::Config,
            Error::Picard { .. }
            | Error::FixedPoint { .. }
            | Error::Cg { .. }
            | Error::Divergence { .. }
            | Error::OuterLimit { .. }
            | Error::Eigen { .. } => ErrorClass::NonConvergence,
            _ => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
