use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum MuseError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("training diverged at step {step}: {reason}")]
    TrainingDiverged { step: usize, reason: String },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("conjugate gradients stalled after {iterations} iterations (relative residual {residual:e})")]
    SolverStalled { iterations: usize, residual: f64 },

    #[error("solver diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<MuseError>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, MuseError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(MuseError::InvalidArgument(msg.into()))
}

impl MuseError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MuseError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        MuseError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
