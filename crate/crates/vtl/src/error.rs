use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] vtl_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: record {record}: {message}")]
    Schema { path: PathBuf, record: usize, message: String },
    #[error("{path}: corrupt file: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("{path}: format version {found} is not supported (expected {expected})")]
    Version { path: PathBuf, found: u32, expected: u32 },
    #[error("{0} is locked by another run (remove the lock file if it is stale)")]
    Locked(PathBuf),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn schema(path: impl Into<PathBuf>, record: usize, message: impl ToString) -> Self {
        Error::Schema { path: path.into(), record, message: message.to_string() }
    }

    pub fn corrupt(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Corrupt { path: path.into(), message: message.to_string() }
    }

    /// Process exit code: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Core(vtl_core::Error::Numeric(_) | vtl_core::Error::Diverged { .. }) => 3,
            Error::Core(vtl_core::Error::Config(_)) => 1,
            _ => 2,
        }
    }
}
