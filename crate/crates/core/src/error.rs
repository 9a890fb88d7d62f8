use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while decoding an IDX file.
#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated IDX data: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unexpected image dimensions {rows}x{cols}, expected 28x28")]
    Dimensions { rows: u32, cols: u32 },
    #[error("label {label} at position {index} is not a digit class")]
    BadLabel { index: usize, label: u8 },
}

/// Failures while reading a serialized network.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("not a network file (magic {0:?})")]
    Magic([u8; 4]),
    #[error("unsupported network file version {found} (this build reads {supported})")]
    Version { found: u32, supported: u32 },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("corrupt network file: {0}")]
    Corrupt(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("class {0} unavailable")]
    MissingClass(usize),
    #[error("invalid exemplar selection: {0}")]
    Selection(String),
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    Dimension {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("grid {rows}x{cols} cannot be pooled, both dimensions must be even")]
    OddDimensions { rows: usize, cols: usize },
    #[error("degenerate patch: maximum pixel value must be positive")]
    DegeneratePatch,
    #[error("window at ({row}, {col}) does not fit in a {rows}x{cols} grid")]
    OutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("kernel expects {expected} input channels, got {found}")]
    ChannelCount { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{images} images but {labels} labels")]
    LabelCount { images: usize, labels: usize },
}
