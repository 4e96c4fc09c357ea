//! Matrix-multiply executors over compressed weights.
//!
//! Three paths share one accumulation contract so their f32 outputs are
//! bitwise comparable: for every output element, products are added in
//! ascending k order with no fused multiply-add and no reassociation.
//!
//! * [`dense_gemm_ref`] multiplies a plain weight matrix.
//! * [`fused_gemm`] decodes one fragment at a time straight out of the
//!   compressed representation, consumes it, and discards it; the full
//!   weight matrix is never materialized.
//! * [`decoupled_pipeline`] decompresses everything first, then runs the
//!   dense path.
//!
//! Rows beyond the logical output dimension are skipped, and padded
//! weight columns never contribute a term: the activation matrix has no
//! rows there, and adding synthetic zero products could still flip the
//! sign of a -0.0 accumulator.

use crate::codec::{decompress_reference, WeightMatrix};
use crate::error::{Error, Result};
use crate::format::CompressedMatrix;
use crate::tile::{frag_linear_index, frag_origin, FRAG_DIM, FRAG_ELEMS};
use crate::warp::decode_fragment_warp;

/// Activations, row-major K x N.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationMatrix {
    k_dim: usize,
    n_dim: usize,
    data: Vec<crate::bf16::Bf16Word>,
}

impl ActivationMatrix {
    pub fn new(
        k_dim: usize,
        n_dim: usize,
        data: Vec<crate::bf16::Bf16Word>,
    ) -> Result<ActivationMatrix> {
        let expected = k_dim * n_dim;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                len: data.len(),
                expected,
            });
        }
        Ok(ActivationMatrix { k_dim, n_dim, data })
    }

    pub fn from_f32(k_dim: usize, n_dim: usize, values: &[f32]) -> Result<ActivationMatrix> {
        ActivationMatrix::new(
            k_dim,
            n_dim,
            values
                .iter()
                .map(|&v| crate::bf16::Bf16Word::from_f32(v))
                .collect(),
        )
    }

    pub fn k_dim(&self) -> usize {
        self.k_dim
    }

    pub fn n_dim(&self) -> usize {
        self.n_dim
    }

    #[inline]
    pub fn get(&self, k: usize, n: usize) -> crate::bf16::Bf16Word {
        self.data[k * self.n_dim + n]
    }
}

/// f32 accumulator outputs, row-major M x N.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMatrix {
    m_dim: usize,
    n_dim: usize,
    data: Vec<f32>,
}

impl OutputMatrix {
    fn zeros(m_dim: usize, n_dim: usize) -> OutputMatrix {
        OutputMatrix {
            m_dim,
            n_dim,
            data: vec![0.0; m_dim * n_dim],
        }
    }

    pub fn m_dim(&self) -> usize {
        self.m_dim
    }

    pub fn n_dim(&self) -> usize {
        self.n_dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> f32 {
        self.data[m * self.n_dim + n]
    }

    /// Bitwise equality of every accumulator, including NaN payloads and
    /// zero signs. Plain `==` on floats would treat -0.0 == 0.0.
    pub fn bitwise_eq(&self, other: &OutputMatrix) -> bool {
        self.m_dim == other.m_dim
            && self.n_dim == other.n_dim
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// The one multiply-accumulate step every execution path goes through.
///
/// Never inlined: when both the accumulator and the product are NaN, the
/// result payload depends on the operand order of the emitted instruction,
/// so letting each loop compile its own copy would break bitwise
/// equivalence between the paths. One shared body pins it.
#[inline(never)]
fn accumulate(acc: f32, weight: f32, activation: f32) -> f32 {
    acc + weight * activation
}

/// Dense reference multiply under the canonical accumulation order.
pub fn dense_gemm_ref(w: &WeightMatrix, x: &ActivationMatrix) -> Result<OutputMatrix> {
    if w.cols() != x.k_dim() {
        return Err(Error::ShapeMismatch {
            weight_k: w.cols(),
            activation_k: x.k_dim(),
        });
    }
    let (m_dim, n_dim, k_dim) = (w.rows(), x.n_dim(), x.k_dim());
    let mut out = OutputMatrix::zeros(m_dim, n_dim);
    for i in 0..m_dim {
        for j in 0..n_dim {
            let mut acc = 0.0f32;
            for k in 0..k_dim {
                acc = accumulate(acc, w.get(i, k).to_f32(), x.get(k, j).to_f32());
            }
            out.data[i * n_dim + j] = acc;
        }
    }
    Ok(out)
}

/// Instrumentation from a fused execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusedStats {
    /// Largest number of decoded weight elements alive at once.
    pub peak_decoded_elements: usize,
    pub fragments_decoded: usize,
}

/// Fused decode-multiply: equals `dense_gemm_ref(decompress(cm), x)`
/// bitwise, with the decoded working set bounded by one fragment.
pub fn fused_gemm(cm: &CompressedMatrix, x: &ActivationMatrix) -> Result<OutputMatrix> {
    fused_gemm_instrumented(cm, x).map(|(out, _)| out)
}

/// [`fused_gemm`] plus working-set instrumentation.
pub fn fused_gemm_instrumented(
    cm: &CompressedMatrix,
    x: &ActivationMatrix,
) -> Result<(OutputMatrix, FusedStats)> {
    let hdr = cm.header();
    let (m_dim, k_dim) = (hdr.logical_rows as usize, hdr.logical_cols as usize);
    if k_dim != x.k_dim() {
        return Err(Error::ShapeMismatch {
            weight_k: k_dim,
            activation_k: x.k_dim(),
        });
    }
    let n_dim = x.n_dim();
    let mut out = OutputMatrix::zeros(m_dim, n_dim);
    let mut live = 0usize;
    let mut stats = FusedStats {
        peak_decoded_elements: 0,
        fragments_decoded: 0,
    };

    let (_, grid_cols) = cm.block_grid();
    for block in 0..cm.n_blocktiles() {
        let (block_row, block_col) = (block / grid_cols, block % grid_cols);
        let h_seg = cm.block_h_segment(block);
        let l_seg = cm.block_l_segment(block);
        let mut h_cursor = 0usize;
        let mut l_cursor = 0usize;
        for tct in 0..16 {
            for frag in 0..4 {
                let codes = cm.frag_codes(frag_linear_index(block, tct, frag));
                let decoded =
                    decode_fragment_warp(&codes, h_seg, l_seg, h_cursor, l_cursor, hdr.base_exp)?;
                live += FRAG_ELEMS;
                stats.peak_decoded_elements = stats.peak_decoded_elements.max(live);
                stats.fragments_decoded += 1;

                let (r0, c0) = frag_origin(block_row, block_col, tct, frag);
                for (pos, word) in decoded.iter().enumerate() {
                    let (r, k) = (r0 + pos / FRAG_DIM, c0 + pos % FRAG_DIM);
                    if r >= m_dim || k >= k_dim {
                        continue;
                    }
                    let weight = word.to_f32();
                    for j in 0..n_dim {
                        let slot = &mut out.data[r * n_dim + j];
                        *slot = accumulate(*slot, weight, x.get(k, j).to_f32());
                    }
                }

                // Fragment consumed; nothing decoded survives this point.
                live -= FRAG_ELEMS;
                let high = codes.high_freq_count() as usize;
                h_cursor += high;
                l_cursor += FRAG_ELEMS - high;
            }
        }
    }
    Ok((out, stats))
}

/// Decompress-then-multiply: the prefill-style staged pipeline.
pub fn decoupled_pipeline(cm: &CompressedMatrix, x: &ActivationMatrix) -> Result<OutputMatrix> {
    let dense = decompress_reference(cm)?;
    dense_gemm_ref(&dense, x)
}

/// Weight-side memory traffic of the decoupled pipeline, in bytes: the
/// compressed payload is read once, the decompressed tensor is written
/// once and read back once by the multiply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoupledTraffic {
    pub compressed_read_bytes: u64,
    pub decompressed_write_bytes: u64,
    pub decompressed_reread_bytes: u64,
}

impl DecoupledTraffic {
    pub fn total_weight_bytes(&self) -> u64 {
        self.compressed_read_bytes + self.decompressed_write_bytes + self.decompressed_reread_bytes
    }
}

pub fn decoupled_traffic(cm: &CompressedMatrix) -> DecoupledTraffic {
    let hdr = cm.header();
    let padded_bytes = 2 * hdr.padded_rows as u64 * hdr.padded_cols as u64;
    DecoupledTraffic {
        compressed_read_bytes: cm.payload_bits() / 8,
        decompressed_write_bytes: padded_bytes,
        decompressed_reread_bytes: padded_bytes,
    }
}

/// Decode work relative to multiply work: one decode step per stored
/// weight element against 2*M*N*K multiply-accumulate flops. Large token
/// counts amortize decoding away, which is what makes the decoupled
/// pipeline viable for prefill.
pub fn decode_gemm_flop_ratio(cm: &CompressedMatrix, n_tokens: usize) -> f64 {
    let hdr = cm.header();
    let decode_steps = hdr.padded_rows as f64 * hdr.padded_cols as f64;
    let gemm_flops = 2.0
        * hdr.logical_rows as f64
        * hdr.logical_cols as f64
        * n_tokens as f64;
    decode_steps / gemm_flops
}

/// Which execution path to use for a token count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Fused,
    Decoupled,
}

impl std::fmt::Display for ExecMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExecMode::Fused => write!(f, "fused"),
            ExecMode::Decoupled => write!(f, "decoupled"),
        }
    }
}

/// Dispatch policy: fused for token counts up to the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageDecision {
    pub threshold_n: usize,
}

impl Default for StageDecision {
    fn default() -> StageDecision {
        StageDecision { threshold_n: 128 }
    }
}

/// Fused iff `n_tokens <= threshold` (boundary inclusive).
pub fn stage_select(n_tokens: usize, decision: &StageDecision) -> ExecMode {
    if n_tokens <= decision.threshold_n {
        ExecMode::Fused
    } else {
        ExecMode::Decoupled
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bf16::Bf16Word;
    use crate::codec::compress;

    fn ramp_activations(k: usize, n: usize) -> ActivationMatrix {
        let values: Vec<f32> = (0..k * n).map(|i| (i % 13) as f32 - 6.0).collect();
        ActivationMatrix::from_f32(k, n, &values).unwrap()
    }

    fn pseudo_random_weights(rows: usize, cols: usize, seed: u64) -> WeightMatrix {
        let mut state = seed | 1;
        let values: Vec<f32> = (0..rows * cols)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                ((state >> 40) as f32 / (1u64 << 24) as f32) - 0.5
            })
            .collect();
        WeightMatrix::from_f32(rows, cols, &values).unwrap()
    }

    #[test]
    fn identity_weight_passes_activations_through() {
        let mut values = vec![0.0f32; 64 * 64];
        for i in 0..64 {
            values[i * 64 + i] = 1.0;
        }
        let w = WeightMatrix::from_f32(64, 64, &values).unwrap();
        let x = ramp_activations(64, 5);
        let y = dense_gemm_ref(&w, &x).unwrap();
        for i in 0..64 {
            for j in 0..5 {
                assert_eq!(y.get(i, j).to_bits(), x.get(i, j).to_f32().to_bits());
            }
        }
    }

    #[test]
    fn zero_weight_gives_zero_output() {
        let w = WeightMatrix::new(32, 48, vec![Bf16Word::ZERO; 32 * 48]).unwrap();
        let x = ramp_activations(48, 3);
        let y = dense_gemm_ref(&w, &x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_activations_give_zero_output_on_fused_path() {
        let w = pseudo_random_weights(64, 64, 99);
        let cm = compress(&w).unwrap();
        let x = ActivationMatrix::new(64, 4, vec![Bf16Word::ZERO; 64 * 4]).unwrap();
        let y = fused_gemm(&cm, &x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_matches_naive_triple_loop() {
        let w = pseudo_random_weights(128, 128, 7);
        let x = ramp_activations(128, 8);
        let y = dense_gemm_ref(&w, &x).unwrap();
        // Naive ascending-k loop with the same widening; identical order,
        // so the outputs must agree bit for bit.
        for i in 0..128 {
            for j in 0..8 {
                let mut acc = 0.0f32;
                for k in 0..128 {
                    acc += w.get(i, k).to_f32() * x.get(k, j).to_f32();
                }
                assert_eq!(acc.to_bits(), y.get(i, j).to_bits());
            }
        }
    }

    #[test]
    fn three_paths_agree_bitwise() {
        for &(m, k, n) in &[(64usize, 64usize, 1usize), (65, 63, 8), (128, 192, 17)] {
            let w = pseudo_random_weights(m, k, (m * k) as u64);
            let cm = compress(&w).unwrap();
            let x = ramp_activations(k, n);
            let dense = dense_gemm_ref(&decompress_reference(&cm).unwrap(), &x).unwrap();
            let fused = fused_gemm(&cm, &x).unwrap();
            let decoupled = decoupled_pipeline(&cm, &x).unwrap();
            assert!(dense.bitwise_eq(&fused), "fused differs at ({m},{k},{n})");
            assert!(
                dense.bitwise_eq(&decoupled),
                "decoupled differs at ({m},{k},{n})"
            );
        }
    }

    #[test]
    fn fused_working_set_is_one_fragment() {
        let w = pseudo_random_weights(256, 256, 11);
        let cm = compress(&w).unwrap();
        let x = ramp_activations(256, 4);
        let (_, stats) = fused_gemm_instrumented(&cm, &x).unwrap();
        assert_eq!(stats.peak_decoded_elements, FRAG_ELEMS);
        assert_eq!(stats.fragments_decoded, (256 / 8) * (256 / 8));
    }

    #[test]
    fn all_fallback_weights_still_agree() {
        use crate::codec::compress_with_window;
        let w = pseudo_random_weights(64, 128, 3);
        // A window far below the data pushes every logical element to the
        // fallback buffer.
        let cm = compress_with_window(&w, 0).unwrap();
        assert!(cm.in_window_fraction() < 1.0);
        let x = ramp_activations(128, 6);
        let dense = dense_gemm_ref(&decompress_reference(&cm).unwrap(), &x).unwrap();
        let fused = fused_gemm(&cm, &x).unwrap();
        assert!(dense.bitwise_eq(&fused));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let w = pseudo_random_weights(64, 64, 5);
        let x = ramp_activations(65, 2);
        assert!(matches!(
            dense_gemm_ref(&w, &x),
            Err(Error::ShapeMismatch { .. })
        ));
        let cm = compress(&w).unwrap();
        assert!(matches!(
            fused_gemm(&cm, &x),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn stage_select_boundary_is_inclusive() {
        let decision = StageDecision::default();
        assert_eq!(stage_select(32, &decision), ExecMode::Fused);
        assert_eq!(stage_select(128, &decision), ExecMode::Fused);
        assert_eq!(stage_select(129, &decision), ExecMode::Decoupled);
        assert_eq!(stage_select(8192, &decision), ExecMode::Decoupled);
        let custom = StageDecision { threshold_n: 16 };
        assert_eq!(stage_select(17, &custom), ExecMode::Decoupled);
    }

    #[test]
    fn decoupled_traffic_accounts_padded_writes() {
        let w = pseudo_random_weights(100, 200, 21);
        let cm = compress(&w).unwrap();
        let t = decoupled_traffic(&cm);
        assert_eq!(t.compressed_read_bytes, cm.payload_bits() / 8);
        assert_eq!(t.decompressed_write_bytes, 2 * 128 * 256);
        assert_eq!(t.decompressed_reread_bytes, t.decompressed_write_bytes);
    }

    #[test]
    fn decoupled_traffic_matches_intensity_model_term() {
        // The decoupled pipeline's weight traffic per element is
        // 2/CR + 4 bytes: compressed read plus decompressed write plus
        // re-read. Exact when no padding is involved.
        let w = pseudo_random_weights(128, 128, 13);
        let cm = compress(&w).unwrap();
        let t = decoupled_traffic(&cm);
        let elems = 128.0 * 128.0;
        let cr = cm.compression_ratio();
        let model_bytes = elems * (2.0 / cr + 4.0);
        assert!((t.total_weight_bytes() as f64 - model_bytes).abs() < 1e-6);

        // With padding the write/re-read terms grow by the pad fraction
        // and nothing more.
        let w = pseudo_random_weights(100, 200, 17);
        let cm = compress(&w).unwrap();
        let t = decoupled_traffic(&cm);
        let logical = 100.0 * 200.0;
        let padded = 128.0 * 256.0;
        let model_bytes = logical * 2.0 / cm.compression_ratio() + 4.0 * padded;
        assert!((t.total_weight_bytes() as f64 - model_bytes).abs() < 1e-6);
    }

    #[test]
    fn decode_work_vanishes_for_large_token_counts() {
        let w = pseudo_random_weights(128, 128, 2);
        let cm = compress(&w).unwrap();
        let small = decode_gemm_flop_ratio(&cm, 8);
        let large = decode_gemm_flop_ratio(&cm, 8192);
        assert!(large < small / 1000.0);
        assert!(large < 0.04);
    }
}
