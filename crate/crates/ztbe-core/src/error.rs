//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All fallible operations in this crate report one of these variants.
///
/// Container parsing keeps one variant per failure class so callers can
/// distinguish a bad magic number from a truncated stream or an internal
/// inconsistency.
#[derive(Debug, Error, PartialEq)]
pub enum Error {
    /// A BF16 field value lies outside its bit width.
    #[error("field {field} value {value} out of range (max {max})")]
    FieldRange {
        field: &'static str,
        value: u32,
        max: u32,
    },

    /// An operation that needs at least one sample was given none.
    #[error("histogram is empty")]
    EmptyHistogram,

    /// Codeword width outside the supported [1, 8] range.
    #[error("codeword width {0} not in [1, 8]")]
    BadCodewordWidth(u32),

    /// Gaussian model parameter must be strictly positive.
    #[error("sigma must be > 0, got {0}")]
    NonPositiveSigma(f64),

    /// A matrix coordinate lies outside the padded dimensions.
    #[error("position ({row}, {col}) outside padded dims ({rows}, {cols})")]
    CoordsOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    /// Base exponent outside the representable window range [-1, 248].
    #[error("base exponent {0} not in [-1, 248]")]
    BadBaseExp(i32),

    /// Matrix data length disagrees with its dimensions.
    #[error("matrix data length {len} != rows*cols = {expected}")]
    DimensionMismatch { len: usize, expected: usize },

    /// Compression requires at least a 1x1 matrix.
    #[error("cannot compress an empty matrix")]
    EmptyMatrix,

    /// Container does not start with the expected magic bytes.
    #[error("bad container magic {0:02x?}")]
    BadMagic([u8; 4]),

    /// Container version is not supported by this implementation.
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),

    /// Stream ended before the declared contents.
    #[error("truncated container: needed {needed} bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },

    /// Container has bytes past the declared contents.
    #[error("container has {0} trailing bytes")]
    TrailingBytes(usize),

    /// A header field violates a structural invariant.
    #[error("invalid header: {0}")]
    InvalidHeader(String),

    /// Bit-plane popcounts disagree with the buffer segmentation.
    #[error("popcount inconsistency in block {block}: {detail}")]
    PopcountMismatch { block: usize, detail: String },

    /// Per-block offsets are unordered, misaligned, or out of bounds.
    #[error("invalid offset table: {0}")]
    BadOffsets(String),

    /// Segment padding bytes must be zero.
    #[error("nonzero padding in block {block} ({buffer} buffer)")]
    NonZeroPadding { block: usize, buffer: &'static str },

    /// A decoder read past the end of a value segment.
    #[error("decode read past segment end: {0}")]
    Corrupt(String),

    /// GEMM operand shapes do not agree.
    #[error("shape mismatch: weight K = {weight_k}, activation K = {activation_k}")]
    ShapeMismatch {
        weight_k: usize,
        activation_k: usize,
    },
}
