use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    /// A phase ran before the one that produces its input.
    #[error("missing artifact {}: {hint}", artifact.display())]
    Precondition { artifact: PathBuf, hint: String },
    #[error(transparent)]
    Core(#[from] spikewave::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn missing(artifact: impl Into<PathBuf>, hint: impl Into<String>) -> Self {
        CliError::Precondition {
            artifact: artifact.into(),
            hint: hint.into(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
