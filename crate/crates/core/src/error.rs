use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bandlimit {0}: must be at least 1")]
    InvalidBandlimit(usize),

    #[error("bandlimit mismatch: expected {expected}, got {actual}")]
    BandlimitMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("quadrature construction failed: {0}")]
    Quadrature(String),

    #[error("internal numerical error: {0}")]
    Internal(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures while decoding one of the binary containers.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("truncated payload: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },

    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),

    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),

    #[error("invalid content: {0}")]
    Invalid(String),

    #[error("shape mismatch for parameter {name}: expected {expected:?}, found {found:?}")]
    ParameterShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("missing parameter {0}")]
    MissingParameter(String),
}
