use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },
    #[error("invalid tensor: shape {shape:?} does not describe {len} values")]
    BadTensor { shape: Vec<usize>, len: usize },
    #[error("backward: loss must be a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("backward: graph already consumed")]
    GraphConsumed,
    #[error("{op}: index {index} out of range for extent {extent}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        extent: usize,
    },
    #[error("token id {token} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("empty response: nothing to score")]
    EmptyResponse,
    #[error("{what}: length mismatch {left} vs {right}")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0}: empty input")]
    EmptyInput(&'static str),
    #[error("no training pairs left after {filter} (started with {before})")]
    FilteredEmpty { filter: &'static str, before: usize },
    #[error("no preference pairs produced ({skipped} tasks skipped)")]
    NoPairs { skipped: usize },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
