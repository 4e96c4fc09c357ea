//! Lossless BF16 weight compression built on triple-bitmap encoding.
//!
//! BF16 weights of large models concentrate almost all of their exponent
//! mass in seven consecutive values. This crate exploits that: each
//! element gets a fixed 3-bit codeword stored across three per-fragment
//! bit-planes, where codes 1..7 select an exponent inside the chosen
//! window (sign and mantissa packed into one byte) and code 0 falls back
//! to the full 16-bit word. Decoding is constant-time per element via
//! popcount addressing over the combined bit-planes, which is what makes
//! a lockstep 32-lane decode and a fused decode-multiply possible.
//!
//! The crate provides:
//!
//! * [`bf16`] — bit-exact field manipulation for all 65536 patterns
//! * [`analysis`] — exponent histograms, window selection, entropy, and
//!   the expected bits-per-element cost model
//! * [`gaussian`] — the closed-form exponent distribution of Gaussian
//!   weights with unimodality and top-K contiguity checks
//! * [`tile`] / [`format`] / [`container`] — the tiling hierarchy, the
//!   in-memory compressed representation, and the "ZTBE" v1 byte format
//! * [`codec`] — the compressor plus two independent decoders (sequential
//!   reference and lockstep warp simulation), proven equivalent in tests
//! * [`exec`] — dense, fused, and decoupled matrix-multiply paths with a
//!   shared accumulation order so outputs compare bitwise
//! * [`roofline`] — the analytical compute-intensity model relating
//!   compression ratio to memory-bound speedup

pub mod analysis;
pub mod bf16;
pub mod codec;
pub mod container;
pub mod error;
pub mod exec;
pub mod format;
pub mod gaussian;
pub mod roofline;
pub mod tile;
pub mod warp;

pub use analysis::{
    average_bits, compute_histogram, coverage_ratio_topk, select_window, shannon_entropy,
    window_coverage, ExponentHistogram, ExponentWindow,
};
pub use bf16::{
    assemble_fields, pack_sm, split_fields, unpack_sm, Bf16Word, FieldTriple, PackedSm,
};
pub use codec::{
    compress, compress_with_window, compress_with_workers, decompress_reference, decompress_warp,
    verify_roundtrip, RoundtripReport, WeightMatrix,
};
pub use container::{deserialize, serialize};
pub use error::{Error, Result};
pub use exec::{
    decoupled_pipeline, dense_gemm_ref, fused_gemm, fused_gemm_instrumented, stage_select,
    ActivationMatrix, ExecMode, FusedStats, OutputMatrix, StageDecision,
};
pub use format::{CompressedMatrix, FragTileCode, Header};
pub use gaussian::{check_unimodal, top_k_contiguous, GaussianExponentModel};
pub use roofline::{
    ci_decoupled, ci_fused, ci_gemm, degradation_report, predicted_speedup, roofline_attainable,
    CompressionProfile, DegradationRow, GemmShape, HardwareProfile,
};
