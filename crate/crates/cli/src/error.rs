use thiserror::Error;

/// Failure of a pipeline command, each kind mapping to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::MissingArtifact(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<vnfmig::Error> for CliError {
    fn from(e: vnfmig::Error) -> Self {
        match e {
            vnfmig::Error::InvalidConfig(msg) => CliError::Config(msg),
            vnfmig::Error::NonFiniteLoss { epoch, batch } => CliError::Runtime(format!(
                "training diverged at epoch {epoch}, batch {batch}; lower the learning rate (--lr)"
            )),
            other => CliError::Runtime(other.to_string()),
        }
    }
}
