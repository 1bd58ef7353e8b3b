use std::fmt;
use std::path::Path;

/// Failure of one scenario, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or invalid input; exit code 2.
    #[error("{0}")]
    Config(ConfigError),
    /// A check ran and did not pass; exit code 1.
    #[error("check failed: {0}")]
    CheckFailed(String),
    /// A computation aborted; exit code 1.
    #[error(transparent)]
    Run(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::CheckFailed(_) | CliError::Run(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

/// Configuration problem located at `path` and, when known, a 1-based line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: &Path, line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.path, line, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}
