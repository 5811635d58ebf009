use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("stale artifact: {0}")]
    Stale(String),
    #[error("missing artifact: {0}")]
    Missing(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit code.
    pub fn code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Solver(_) | Self::Io { .. } => 3,
            Self::Stale(_) | Self::Missing(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<twinrom_core::Error> for CliError {
    fn from(e: twinrom_core::Error) -> Self {
        Self::Solver(e.to_string())
    }
}

impl From<twinrom_dl::Error> for CliError {
    fn from(e: twinrom_dl::Error) -> Self {
        match e {
            twinrom_dl::Error::Config(m) => Self::Config(m),
            other => Self::Solver(other.to_string()),
        }
    }
}
