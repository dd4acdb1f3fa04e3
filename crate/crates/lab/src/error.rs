use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] adamb_core::Error),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        LabError::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Whether the error stems from user input rather than from a run.
    pub fn is_usage(&self) -> bool {
        match self {
            LabError::Config(_) | LabError::Parse { .. } => true,
            LabError::Core(e) => matches!(e, adamb_core::Error::Config(_)),
            LabError::Io { .. } => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
