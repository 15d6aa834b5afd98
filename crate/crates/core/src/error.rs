use std::path::PathBuf;

/// Every failure the laboratory can report.
///
/// The variants are grouped by the CLI exit code they map to; see
/// [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("phase aliasing: {0}")]
    Aliasing(String),

    #[error("resource budget exceeded: {0}")]
    Resource(String),

    #[error("i/o failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code: 2 for input problems, 3 for contract or
    /// degeneracy failures, 4 for resource budgets.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Parse { .. } | Error::Io { .. } => 2,
            Error::Contract(_) | Error::Degenerate(_) | Error::Aliasing(_) => 3,
            Error::Resource(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
