use std::io;

/// Errors raised anywhere in the laboratory.
///
/// Variants are grouped so that front ends can map them onto coarse exit
/// categories with [`Error::category`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("spectral integrity: {0}")]
    SpectralIntegrity(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unstable time step: {0}")]
    UnstableStep(String),

    #[error("solver became unstable at step {step}: max |u| = {max_abs:e}")]
    Stability { step: usize, max_abs: f64 },

    #[error("trajectory {trajectory}: {source}")]
    Trajectory {
        trajectory: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("rollout diverged at step {step}: max |u| = {max_abs:e}")]
    RolloutDivergence { step: usize, max_abs: f64 },

    #[error("training diverged at epoch {epoch}, step {step}: {reason}")]
    Training {
        epoch: usize,
        step: usize,
        reason: String,
    },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("unsupported {what} version {found} (expected {expected})")]
    UnsupportedVersion {
        what: &'static str,
        found: u16,
        expected: u16,
    },

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("diagnostic error: {0}")]
    Diagnostic(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Coarse classification used by command-line front ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Usage(_) | Error::Precondition(_) => ErrorCategory::Usage,
            Error::Stability { .. }
            | Error::UnstableStep(_)
            | Error::RolloutDivergence { .. }
            | Error::Training { .. }
            | Error::Diagnostic(_) => ErrorCategory::Numerical,
            Error::Trajectory { source, .. } => source.category(),
            _ => ErrorCategory::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
