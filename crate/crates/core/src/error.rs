use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible top-k spec: k = {k}, k0 = {k0}, n = {n} (need 1 <= k0 <= k and k + k0 <= n)")]
    InfeasibleSpec { k: usize, k0: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("numeric failure in {routine}: {detail}")]
    Numeric { routine: &'static str, detail: String },

    #[error("interpreter failed on sample {sample}: {source}")]
    Interpreter {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than internal failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Numeric { .. } | Error::Io { .. })
    }
}

/// Errors raised while decoding an RRSM map file.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("map file not found: {0}")]
    Missing(PathBuf),

    #[error("bad magic bytes {found:?}, expected \"RRSM\"")]
    BadMagic { found: Vec<u8> },

    #[error("unsupported RRSM version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },

    #[error("truncated file at byte offset {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },

    #[error("header declares a zero dimension ({height}x{width}x{channels})")]
    ZeroDim {
        height: u32,
        width: u32,
        channels: u32,
    },

    #[error("payload size mismatch: header declares {expected} values, file holds {found}")]
    PayloadMismatch { expected: usize, found: usize },

    #[error("map dims {found:?} do not match requested dims {expected:?}")]
    DimsMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
}
