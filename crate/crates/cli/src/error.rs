use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad config at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] jkoflow::Error),
}

impl CliError {
    /// 0 success, 1 validation failure, 2 solver or runtime failure, 3 bad
    /// config.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 3,
            Self::Validation(_) => 1,
            Self::Solver(_) | Self::Io { .. } => 2,
            Self::Core(jkoflow::Error::InvalidInput(_)) => 3,
            Self::Core(_) => 2,
        }
    }
}
