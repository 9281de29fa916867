use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("{stage}: missing input {}", path.display())]
    MissingInput { stage: &'static str, path: PathBuf },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: fallimpact_core::Error,
    },

    #[error("{stage}: i/o error on {}: {source}", path.display())]
    Io {
        stage: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 for bad input or configuration, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingInput { .. } => 1,
            CliError::Stage { source, .. } if source.is_validation() => 1,
            CliError::Stage { .. } | CliError::Io { .. } => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Tags core errors with the stage that raised them.
pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for fallimpact_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
