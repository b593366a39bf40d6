use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NON_CONVERGENCE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cpuzzle_core::Error),

    #[error("{0}")]
    Usage(String),

    #[error("no bundles found under {}", .0.display())]
    EmptyCorpus(PathBuf),

    #[error("failed to serialize {what}: {message}")]
    Serialize { what: &'static str, message: String },

    #[error("simulation did not converge for {0}")]
    NonConvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.kind() {
                cpuzzle_core::ErrorKind::Io => EXIT_IO,
                cpuzzle_core::ErrorKind::Validation => EXIT_VALIDATION,
            },
            CliError::EmptyCorpus(_) => EXIT_IO,
            CliError::Usage(_) | CliError::Serialize { .. } => EXIT_VALIDATION,
            CliError::NonConvergence(_) => EXIT_NON_CONVERGENCE,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<image::ImageError> for CliError {
    fn from(e: image::ImageError) -> Self {
        CliError::Core(e.into())
    }
}
