use std::path::{Path, PathBuf};

use debias_core::Error as CoreError;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed WAV {}: {reason}", path.display())]
    MalformedWav { path: PathBuf, reason: String },
    #[error("unsupported WAV format in {}: {reason}", path.display())]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("malformed manifest {}: {reason}", path.display())]
    MalformedManifest { path: PathBuf, reason: String },
    #[error("duplicate subject id {0}")]
    DuplicateSubjectId(String),
    #[error("malformed file {}: {reason}", path.display())]
    MalformedFile { path: PathBuf, reason: String },
    #[error("non-finite loss: {0}")]
    NanLoss(String),
    #[error(transparent)]
    Core(CoreError),
}

pub type AppResult<T> = std::result::Result<T, AppError>;

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonFinite(what) => AppError::NanLoss(what.to_string()),
            CoreError::InvalidConfig(m) => AppError::InvalidConfig(m),
            other => AppError::Core(other),
        }
    }
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io { path: path.to_path_buf(), source }
    }

    pub fn malformed(path: &Path, reason: impl Into<String>) -> Self {
        AppError::MalformedFile { path: path.to_path_buf(), reason: reason.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Usage(_) | AppError::InvalidConfig(_) => EXIT_USAGE,
            AppError::NanLoss(_) => EXIT_NUMERICAL,
            AppError::Core(e) => match e {
                CoreError::InvalidSpec(_)
                | CoreError::InvalidK { .. }
                | CoreError::InvalidStftConfig(_)
                | CoreError::InvalidSynthesisSpec(_) => EXIT_USAGE,
                CoreError::NonFinite(_) => EXIT_NUMERICAL,
                _ => EXIT_DATA,
            },
            _ => EXIT_DATA,
        }
    }
}
