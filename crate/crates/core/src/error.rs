use alloc::string::String;

/// Errors shared by the tensor, tracking, codec, and updater paths.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("tensor `{name}`: {reason}")]
    InvalidTensor { name: String, reason: String },
    #[error("tensor `{name}`: shape mismatch")]
    ShapeMismatch { name: String },
    #[error("tensor `{name}`: dtype mismatch")]
    DTypeMismatch { name: String },
    #[error("unknown tensor `{name}`")]
    UnknownTensor { name: String },
    #[error("tensor `{name}`: index {index} out of range (numel {numel})")]
    IndexOutOfRange {
        name: String,
        index: u32,
        numel: u64,
    },
    #[error("index list is not strictly increasing")]
    NotSorted,
    #[error("index {index} exceeds the 31-bit flat-index range")]
    IndexOverflow { index: u64 },
    #[error("snapshots have different schemas: {0}")]
    SchemaMismatch(String),
    #[error("locality needs at least two steps of history")]
    TooFewSteps,
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported format version {found}")]
    VersionUnsupported { found: u16 },
    #[error("payload CRC mismatch")]
    CrcMismatch,
    #[error("input ends before the encoded data does")]
    Truncated,
    #[error("corrupt encoding: {0}")]
    Corrupt(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
