use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum InnError {
    #[error("input vector has (near-)zero norm {norm:e}; amplitude encoding is undefined")]
    ZeroNormInput { norm: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {dim} exceeds the limit of {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("non-finite gradient at parameter {index}; optimizer step skipped")]
    NonFiniteGradient { index: usize },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("forward cache does not match the network it is used with")]
    StaleCache,

    #[error("optimality gap undefined: ground energy is zero")]
    GapUndefined,

    #[error("non-finite energy at epoch {epoch}")]
    NonFiniteEnergy { epoch: usize },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("class {0} does not occur in the dataset")]
    ClassAbsent(usize),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("bad magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic { expected: u32, found: u32 },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("truncated file: needed {needed} bytes, found {found}")]
    TruncatedFile { needed: usize, found: usize },

    #[error("malformed image file {path}: {reason}")]
    BadImage { path: PathBuf, reason: String },

    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = InnError> = std::result::Result<T, E>;
