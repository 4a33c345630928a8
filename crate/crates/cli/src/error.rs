use auxcal_core::CoreError;
use thiserror::Error;

/// Harness-level errors, each mapped to a distinct process exit code so
/// scripted sweeps can tell failure classes apart.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O failure at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt file {path}: {what}")]
    Corrupt { path: String, what: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io { .. } | CliError::Corrupt { .. } => EXIT_IO,
            CliError::Core(e) => match e {
                CoreError::Config(_) | CoreError::Shape { .. } | CoreError::Data(_) => EXIT_CONFIG,
                CoreError::Numerical { .. } | CoreError::Training(_) => EXIT_NUMERICAL,
            },
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}
