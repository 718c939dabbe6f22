//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FinslerError>;

#[derive(Debug, Clone, Error)]
pub enum FinslerError {
    #[error("point {point:?} lies outside the chart domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero vector where a nonzero direction is required")]
    DegenerateDirection,

    #[error("fundamental tensor not positive definite at {context} (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { context: String, min_eigenvalue: f64 },

    #[error("numeric failure in {context}: residual {residual:.3e}")]
    Numeric { context: String, residual: f64 },

    #[error("geodesic left the chart domain at t = {t:.6}")]
    DomainExit { t: f64, state: Vec<f64> },

    #[error("distance solver did not converge from {from:?} to {to:?}; best upper bound {upper_bound:.6e}")]
    SolverFailure {
        from: Vec<f64>,
        to: Vec<f64>,
        upper_bound: f64,
    },

    #[error("Busemann truncation did not converge below tol {tol:.3e} by t_max {t_max}; bracket ({lower:.9e}, {upper:.9e})")]
    BusemannNonConvergence {
        tol: f64,
        t_max: f64,
        lower: f64,
        upper: f64,
    },

    #[error("geodesic is not minimizing: d({s:.3}, {t:.3}) = {measured:.9e}, expected {expected:.9e}")]
    NotMinimizing {
        s: f64,
        t: f64,
        measured: f64,
        expected: f64,
    },

    #[error("operation {op} is not supported for this structure: {reason}")]
    Unsupported { op: String, reason: String },

    #[error("invalid argument for {context}: {reason}")]
    InvalidArgument { context: String, reason: String },

    #[error("level {level} not reached on the grid (range [{min:.6e}, {max:.6e}])")]
    LevelOutOfRange { level: f64, min: f64, max: f64 },
}

impl FinslerError {
    pub(crate) fn numeric(context: impl Into<String>, residual: f64) -> Self {
        FinslerError::Numeric {
            context: context.into(),
            residual,
        }
    }

    pub(crate) fn invalid(context: impl Into<String>, reason: impl Into<String>) -> Self {
        FinslerError::InvalidArgument {
            context: context.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn unsupported(op: impl Into<String>, reason: impl Into<String>) -> Self {
        FinslerError::Unsupported {
            op: op.into(),
            reason: reason.into(),
        }
    }
}
