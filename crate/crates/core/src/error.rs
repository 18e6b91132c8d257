use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by loading, indexing, searching and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An input file is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// Binary header has the wrong magic bytes.
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {0} (expected 1)")]
    BadVersion(u32),

    /// The payload ended before the header's declared size.
    #[error("truncated payload: {required} bytes required, {available} present")]
    Truncated { required: u64, available: u64 },

    /// A persisted index does not match its data or its own checksum.
    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
