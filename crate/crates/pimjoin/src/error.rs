use pimjoin_core::{Error, ErrorKind};

pub type AppResult<T> = Result<T, AppError>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Model(#[from] Error),

    /// Bad flags, unreadable or malformed inputs.
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl AppError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// 2 configuration, 3 invariant violation, 4 capacity.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Model(e) => match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Invariant => 3,
                ErrorKind::Capacity => 4,
            },
            AppError::Usage(_) | AppError::Io { .. } => 2,
        }
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::Usage(format!("json: {e}"))
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        AppError::Usage(format!("csv: {e}"))
    }
}
