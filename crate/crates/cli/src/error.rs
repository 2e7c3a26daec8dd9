//! Command errors and their exit codes.

use muse_core::MuseError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("stage {stage} diverged")]
    Diverged { stage: usize },

    #[error("golden suite: {0}")]
    Golden(String),

    #[error(transparent)]
    Core(#[from] MuseError),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 2 for configuration problems, 3 for numerical divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Diverged { .. } => EXIT_DIVERGED,
            CliError::Golden(_) => EXIT_FAILURE,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &MuseError) -> i32 {
    match e {
        MuseError::InvalidArgument(_) | MuseError::Io { .. } | MuseError::Format { .. } => {
            EXIT_CONFIG
        }
        MuseError::Diverged { .. } | MuseError::TrainingDiverged { .. } => EXIT_DIVERGED,
        MuseError::Stage { source, .. } => match core_exit_code(source) {
            EXIT_DIVERGED => EXIT_DIVERGED,
            _ => EXIT_FAILURE,
        },
        _ => EXIT_FAILURE,
    }
}

/// Config errors surface as `CliError::Config` so the message names the key.
pub fn config_err(e: MuseError) -> CliError {
    match e {
        MuseError::InvalidArgument(msg) => CliError::Config(msg),
        other => CliError::Core(other),
    }
}
