use std::io;

use thiserror::Error;

use crate::types::InstanceId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown instance id {0}")]
    UnknownId(InstanceId),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch { expected: (usize, usize), actual: (usize, usize) },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("layer count {given} too small, scene requires {required}")]
    LayerCountTooSmall { required: usize, given: usize },

    #[error("instance {0} has an empty amodal mask")]
    ZeroArea(InstanceId),

    #[error("scene generation failed after {attempts} attempts on object {object}")]
    GenerationFailed { object: usize, attempts: usize },

    #[error("ground truth is empty; recall is undefined")]
    EmptyGroundTruth,

    #[error("no overlapping instance pairs; order accuracy is undefined")]
    NoOverlappingPairs,

    #[error("rle counts sum to {sum}, expected {expected}")]
    RleCountMismatch { sum: u64, expected: u64 },

    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("{actual} trailing bytes after payload of {expected} bytes")]
    TrailingBytes { expected: usize, actual: usize },

    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema { path: path.into(), message: message.into() }
    }
}
