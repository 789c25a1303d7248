use std::path::{Path, PathBuf};

pub type AppResult<T> = Result<T, AppError>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),
    #[error(transparent)]
    Core(#[from] tlcm_core::Error),
    #[error("{0}")]
    Check(String),
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Short machine-readable category printed on failure.
    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Config(_) => "config",
            AppError::Io { .. } => "io",
            AppError::Checkpoint(_) => "checkpoint",
            AppError::Core(tlcm_core::Error::Divergence { .. }) => "divergence",
            AppError::Core(tlcm_core::Error::Config(_)) => "config",
            AppError::Core(_) => "numeric",
            AppError::Check(_) => "check",
        }
    }

    /// `error: kind=<kind> msg="<message>"` on one line.
    pub fn one_line(&self) -> String {
        let msg = self
            .to_string()
            .replace('\\', "\\\\")
            .replace('"', "\\\"")
            .replace('\n', " ");
        format!("error: kind={} msg=\"{}\"", self.kind(), msg)
    }
}
