use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// `key` is a dotted path into the config document, e.g. `train.epochs`.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{}: {kind}", path.display())]
    Parse { path: PathBuf, kind: ParseError },

    /// Checkpoint and dataset disagree on a shape.
    #[error("dimension mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Core(#[from] skewbench_core::Error),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("bad magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("line {line}, column `{column}`: `{value}` is not a number")]
    NonNumeric {
        line: usize,
        column: String,
        value: String,
    },

    #[error("no `{0}` column in header")]
    MissingColumn(String),

    #[error("{0}")]
    Malformed(String),

    #[error("json: {0}")]
    Json(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, kind: ParseError) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            kind,
        }
    }

    pub fn malformed(path: &Path, message: impl Into<String>) -> Self {
        Error::parse(path, ParseError::Malformed(message.into()))
    }

    /// 1 for configuration problems, 2 for IO, parse and shape errors, 3 for
    /// numeric failures.
    pub fn exit_code(&self) -> i32 {
        use skewbench_core::Error as Core;
        match self {
            Error::Config { .. } => 1,
            Error::Core(Core::InvalidArgument(_) | Core::InfeasibleImbalance { .. }) => 1,
            Error::Io { .. } | Error::Parse { .. } | Error::Mismatch(_) => 2,
            Error::Core(Core::NumericDegeneracy(_) | Core::DegenerateGeometry(_)) => 3,
        }
    }
}
