//! Crate-wide error type.
//!
//! Every failure is classified into one of three [`ErrorKind`]s so that the
//! CLI can map it to its exit-code convention (2 = validation, 3 = numerical,
//! 4 = I/O).

use thiserror::Error;

use crate::greedy::SelectionResult;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure category, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad inputs or configuration (exit code 2).
    Validation,
    /// Numerical breakdown inside an algorithm (exit code 3).
    Numerical,
    /// Filesystem or serialization failure (exit code 4).
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate nodes: minimum pairwise distance {min_dist:e} is below 1e-12")]
    DuplicateNodes { min_dist: f64 },

    #[error("kernel matrix factorization failed even at jitter {jitter:e}")]
    SingularMatrix { jitter: f64 },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("reconstructor failed during greedy selection: {message}")]
    ReconstructorFailure {
        message: String,
        /// The points selected before the failure.
        partial: Box<SelectionResult>,
    },

    #[error("power iteration did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("residual norm grew more than 10x over a 50-iteration window (iteration {iteration}); the step size is too large")]
    DivergenceDetected { iteration: usize },

    #[error("source does not fit the field of view: {0}")]
    SourceOutOfField(String),

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DuplicateNodes { .. }
            | Error::SourceOutOfField(_)
            | Error::InvalidConfig(_) => ErrorKind::Validation,
            Error::SingularMatrix { .. }
            | Error::NumericalBreakdown(_)
            | Error::ReconstructorFailure { .. }
            | Error::NoConvergence(_)
            | Error::DivergenceDetected { .. }
            | Error::DivisionByZero(_) => ErrorKind::Numerical,
            Error::Stage { source, .. } => source.kind(),
            Error::Io(_) | Error::Format { .. } => ErrorKind::Io,
        }
    }

    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

/// Extension to annotate results with the pipeline stage that produced them.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
