use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: pgrom::Error,
    },

    #[error("stage {stage} needs {}, which is missing; run the upstream stages first", .path.display())]
    MissingArtifact { stage: &'static str, path: PathBuf },

    #[error("hash mismatch for {}: manifest records {expected}, file has {actual}", .path.display())]
    HashMismatch { path: PathBuf, expected: String, actual: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn stage(stage: &'static str) -> impl FnOnce(pgrom::Error) -> CliError {
        move |source| CliError::Stage { stage, source }
    }

    /// 2 validation, 3 numerical failure, 4 artifact or IO error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Stage { source, .. } => match source.root() {
                pgrom::Error::Io(_) | pgrom::Error::Format { .. } | pgrom::Error::Json(_) => 4,
                pgrom::Error::Configuration(_) => 2,
                _ => 3,
            },
            CliError::MissingArtifact { .. } | CliError::HashMismatch { .. } | CliError::Io { .. } => 4,
        }
    }
}
