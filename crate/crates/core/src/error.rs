use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument `{field}`: {reason}")]
    InvalidArgument { field: String, reason: String },

    #[error("zero-mean input required, (v,1) = {mass:e}")]
    NonZeroMeanInput { mass: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("Newton diverged after {iterations} iterations (residual {residual:e}, tolerance {tolerance:e})")]
    NewtonDiverged {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("realization {realization}: {source}")]
    Realization {
        realization: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{skipped} of {total} realizations failed, report is invalid")]
    TooManyFailures { skipped: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the nonlinear or linear solvers (as opposed to
    /// configuration or I/O problems), looking through step/realization wrappers.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::NewtonDiverged { .. } | Error::LinearSolveFailure(_) => true,
            Error::TooManyFailures { .. } => true,
            Error::AtStep { source, .. } | Error::Realization { source, .. } => {
                source.is_solver_failure()
            }
            _ => false,
        }
    }
}
