use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] qrc_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("missing upstream artifact {}; run `{stage}` first", path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("malformed artifact {}: {message}", path.display())]
    Artifact { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn artifact(path: &Path, message: impl ToString) -> Self {
        CliError::Artifact {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// Process exit status: 2 configuration, 3 numeric failure, 4 I/O.
    pub fn exit_code(&self) -> u8 {
        use qrc_core::Error as E;
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Core(E::InvalidArgument(_)) => 2,
            CliError::Core(_) => 3,
            CliError::Io { .. } | CliError::MissingArtifact { .. } | CliError::Artifact { .. } => 4,
        }
    }
}
