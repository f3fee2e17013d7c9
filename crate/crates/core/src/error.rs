use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures raised by the IDX reader. Each malformed-file class gets its own variant.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad magic number 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated file: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("item count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{extra} unexpected trailing bytes")]
    TrailingBytes { extra: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model specification: {0}")]
    Spec(String),

    #[error("shape mismatch at layer {layer}: expected {expected}, found {found}")]
    Shape {
        layer: usize,
        expected: String,
        found: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("{path}: {source}")]
    Idx {
        path: PathBuf,
        #[source]
        source: IdxError,
    },

    #[error(transparent)]
    IdxBytes(#[from] IdxError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors a user can fix by editing inputs (config, data files, paths).
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Idx { .. } | Error::IdxBytes(_) | Error::Io { .. } | Error::Data(_)
        )
    }
}
