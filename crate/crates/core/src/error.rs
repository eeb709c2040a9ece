use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector has no nonzero component")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("similarity {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("invalid vector: {0}")]
    InvalidVector(String),
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),

    #[error("frame sequence is empty")]
    EmptySequence,
    #[error("invalid frame sequence: {0}")]
    InvalidSequence(String),
    #[error("patch size {patch} exceeds frame {height}x{width}")]
    PatchLargerThanFrame { height: usize, width: usize, patch: usize },
    #[error("provider returned dimension {found}, expected {expected}")]
    ProviderDimensionMismatch { expected: usize, found: usize },
    #[error("provider failure: {0}")]
    Provider(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least {needed} training vectors, got {got}")]
    InsufficientTrainingData { needed: usize, got: usize },
    #[error("duplicate patch {0}")]
    DuplicatePatch(String),

    #[error("io failure: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed index file: {0}")]
    Malformed(String),

    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("not found: {0}")]
    NotFound(String),

    #[error("index is empty")]
    EmptyIndex,
    #[error("query text is empty")]
    EmptyQuery,
    #[error("scorer failed on frame {frame_id}: {reason}")]
    ScorerFailure { frame_id: String, reason: String },

    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}
