use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library. CLI code wraps these with `anyhow` context.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("sample {id:?}: {msg}")]
    InvalidSample { id: String, msg: String },

    #[error("{0}: empty input")]
    Empty(&'static str),

    #[error("bad magic bytes {0:?}, expected \"MSFV\"")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("non-finite value at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },

    #[error("header declares {declared} {what}, found {found}")]
    HeaderMismatch {
        what: &'static str,
        declared: usize,
        found: usize,
    },

    #[error("line {line}: expected {expected} components, found {found}")]
    Arity { line: usize, expected: usize, found: usize },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("model kind mismatch: expected {expected}, found {found}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible constraint: {0}")]
    Infeasible(String),

    #[error("token {0:?} is not in the decoder vocabulary")]
    OutOfVocabulary(String),

    #[error("replay scorer has no entry for prefix {0:?}")]
    MissingPrefix(Vec<u32>),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
