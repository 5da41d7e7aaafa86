use std::path::PathBuf;

use hmtc_core::Error as CoreError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad config file, or a missing required path.
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: CoreError,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches the file a core error came from.
    pub fn in_file(path: impl Into<PathBuf>, source: CoreError) -> Self {
        match source {
            // already carries its own path
            e @ (CoreError::Io { .. } | CoreError::Json { .. }) => CliError::Core(e),
            source => CliError::File {
                path: path.into(),
                source,
            },
        }
    }

    /// 0 ok, 1 usage or config, 2 data, 3 numerical or degenerate.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } => 2,
            CliError::File { source, .. } | CliError::Core(source) => core_exit_code(source),
        }
    }
}

fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::InvalidParameter(_) | CoreError::InvalidFeatureSpec(_) => 1,
        e if e.is_numerical() => 3,
        _ => 2,
    }
}
