//! Compression and the two independent decoders.
//!
//! The compressor profiles the exponent histogram once per matrix, picks
//! the best 7-wide window, then encodes block tiles independently and
//! merges them in canonical order, so worker count never changes the
//! output bytes. The reference decoder walks each block's segments with
//! sequential cursors; the warp decoder recomputes every offset by
//! popcount addressing. Agreement between the two is the codec's core
//! correctness check.

use rayon::prelude::*;

use crate::analysis::{compute_histogram, select_window, window_coverage};
use crate::bf16::{
    assemble_unchecked, pack_sm, split_fields, unpack_sm, Bf16Word, PackedSm,
};
use crate::container;
use crate::error::{Error, Result};
use crate::format::{
    align_segment, BlockOffsets, CompressedMatrix, FragTileCode, Header,
};
use crate::tile::{
    frag_linear_index, frag_origin, pad_dim, BLOCK_DIM, FRAGS_PER_BLOCK, FRAG_DIM, FRAG_ELEMS,
};
use crate::warp::decode_fragment_warp;

/// A dense BF16 matrix in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Bf16Word>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Bf16Word>) -> Result<WeightMatrix> {
        let expected = rows * cols;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                len: data.len(),
                expected,
            });
        }
        Ok(WeightMatrix { rows, cols, data })
    }

    /// Convert f32 values element-wise (round to nearest even).
    pub fn from_f32(rows: usize, cols: usize, values: &[f32]) -> Result<WeightMatrix> {
        WeightMatrix::new(
            rows,
            cols,
            values.iter().map(|&v| Bf16Word::from_f32(v)).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Bf16Word] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Bf16Word {
        self.data[row * self.cols + col]
    }
}

/// Compress with the histogram-selected optimal window.
pub fn compress(w: &WeightMatrix) -> Result<CompressedMatrix> {
    if w.rows == 0 || w.cols == 0 {
        return Err(Error::EmptyMatrix);
    }
    let hist = compute_histogram(&w.data);
    let window = select_window(&hist)?;
    compress_with_window(w, window.base_exp)
}

/// Compress with an explicitly chosen window base. Useful for forcing
/// degenerate encodings (for instance, an all-fallback matrix) and for
/// sharing one window across several matrices.
pub fn compress_with_window(w: &WeightMatrix, base_exp: i16) -> Result<CompressedMatrix> {
    if w.rows == 0 || w.cols == 0 {
        return Err(Error::EmptyMatrix);
    }
    if !(-1..=248).contains(&base_exp) {
        return Err(Error::BadBaseExp(base_exp as i32));
    }
    let padded_rows = pad_dim(w.rows);
    let padded_cols = pad_dim(w.cols);
    // Padding elements take the first window exponent, so they cost one
    // packed byte each and never touch the fallback buffer.
    let pad_word = assemble_unchecked(0, (base_exp + 1) as u8, 0);
    let header = Header {
        logical_rows: w.rows as u32,
        logical_cols: w.cols as u32,
        padded_rows: padded_rows as u32,
        padded_cols: padded_cols as u32,
        base_exp,
        pad_word,
    };

    let grid_cols = padded_cols / BLOCK_DIM;
    let n_blocks = (padded_rows / BLOCK_DIM) * grid_cols;
    let blocks: Vec<BlockEncoding> = (0..n_blocks)
        .into_par_iter()
        .map(|block| encode_block(w, base_exp, pad_word, block / grid_cols, block % grid_cols))
        .collect();

    // Deterministic ordered merge, independent of how the blocks above
    // were scheduled.
    let n_frag = n_blocks * FRAGS_PER_BLOCK;
    let mut b1 = Vec::with_capacity(n_frag);
    let mut b2 = Vec::with_capacity(n_frag);
    let mut b3 = Vec::with_capacity(n_frag);
    let mut h = Vec::new();
    let mut l = Vec::new();
    let mut offsets = Vec::with_capacity(n_blocks);
    for block in &blocks {
        offsets.push(BlockOffsets {
            h_start_bytes: h.len() as u64,
            l_start_bytes: (2 * l.len()) as u64,
        });
        for frag in &block.frags {
            b1.push(frag.b1);
            b2.push(frag.b2);
            b3.push(frag.b3);
        }
        h.extend_from_slice(&block.h);
        h.resize(align_segment(h.len()), 0);
        l.extend_from_slice(&block.l);
        l.resize(align_segment(2 * l.len()) / 2, Bf16Word::ZERO);
    }

    CompressedMatrix::from_parts(header, b1, b2, b3, h, l, offsets)
}

/// Compress on a dedicated pool with the given worker count (0 = the
/// default pool). Output bytes are identical for every worker count.
pub fn compress_with_workers(w: &WeightMatrix, workers: usize) -> Result<CompressedMatrix> {
    if workers == 0 {
        return compress(w);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("failed to build worker pool");
    pool.install(|| compress(w))
}

struct BlockEncoding {
    frags: [FragTileCode; FRAGS_PER_BLOCK],
    h: Vec<u8>,
    l: Vec<Bf16Word>,
}

fn encode_block(
    w: &WeightMatrix,
    base_exp: i16,
    pad_word: Bf16Word,
    block_row: usize,
    block_col: usize,
) -> BlockEncoding {
    let mut frags = [FragTileCode::default(); FRAGS_PER_BLOCK];
    let mut h = Vec::with_capacity(BLOCK_DIM * BLOCK_DIM);
    let mut l = Vec::new();
    for tct in 0..16 {
        for frag in 0..4 {
            let code = &mut frags[tct * 4 + frag];
            let (r0, c0) = frag_origin(block_row, block_col, tct, frag);
            for pos in 0..FRAG_ELEMS {
                let (r, c) = (r0 + pos / FRAG_DIM, c0 + pos % FRAG_DIM);
                let word = if r < w.rows && c < w.cols {
                    w.get(r, c)
                } else {
                    pad_word
                };
                let fields = split_fields(word);
                let delta = fields.exponent as i16 - base_exp;
                if (1..=7).contains(&delta) {
                    code.set_code(pos, delta as u8);
                    h.push(pack_sm(fields.sign, fields.mantissa).0);
                } else {
                    l.push(word);
                }
            }
        }
    }
    BlockEncoding { frags, h, l }
}

/// Sequential reference decoder: walks each block's segments with running
/// cursors in canonical fragment order.
pub fn decompress_reference(m: &CompressedMatrix) -> Result<WeightMatrix> {
    decompress_with(m, DecodeRoute::Reference)
}

/// Full-matrix decode through the lockstep warp decoder, fragment by
/// fragment with popcount addressing.
pub fn decompress_warp(m: &CompressedMatrix) -> Result<WeightMatrix> {
    decompress_with(m, DecodeRoute::Warp)
}

enum DecodeRoute {
    Reference,
    Warp,
}

fn decompress_with(m: &CompressedMatrix, route: DecodeRoute) -> Result<WeightMatrix> {
    let hdr = m.header();
    let (rows, cols) = (hdr.logical_rows as usize, hdr.logical_cols as usize);
    let base_exp = hdr.base_exp;
    let (_, grid_cols) = m.block_grid();
    let mut out = vec![Bf16Word::ZERO; rows * cols];

    for block in 0..m.n_blocktiles() {
        let (block_row, block_col) = (block / grid_cols, block % grid_cols);
        let h_seg = m.block_h_segment(block);
        let l_seg = m.block_l_segment(block);
        let mut h_cursor = 0usize;
        let mut l_cursor = 0usize;
        for tct in 0..16 {
            for frag in 0..4 {
                let codes = m.frag_codes(frag_linear_index(block, tct, frag));
                let (r0, c0) = frag_origin(block_row, block_col, tct, frag);
                match route {
                    DecodeRoute::Reference => {
                        for pos in 0..FRAG_ELEMS {
                            let code = codes.code_at(pos);
                            let word = if code != 0 {
                                let byte = *h_seg.get(h_cursor).ok_or_else(|| {
                                    Error::Corrupt(format!(
                                        "block {block} high-frequency cursor {h_cursor} past segment"
                                    ))
                                })?;
                                h_cursor += 1;
                                let (sign, mantissa) = unpack_sm(PackedSm(byte));
                                assemble_unchecked(sign, (base_exp + code as i16) as u8, mantissa)
                            } else {
                                let word = *l_seg.get(l_cursor).ok_or_else(|| {
                                    Error::Corrupt(format!(
                                        "block {block} fallback cursor {l_cursor} past segment"
                                    ))
                                })?;
                                l_cursor += 1;
                                word
                            };
                            let (r, c) = (r0 + pos / FRAG_DIM, c0 + pos % FRAG_DIM);
                            if r < rows && c < cols {
                                out[r * cols + c] = word;
                            }
                        }
                    }
                    DecodeRoute::Warp => {
                        let decoded = decode_fragment_warp(
                            &codes, h_seg, l_seg, h_cursor, l_cursor, base_exp,
                        )?;
                        for (pos, &word) in decoded.iter().enumerate() {
                            let (r, c) = (r0 + pos / FRAG_DIM, c0 + pos % FRAG_DIM);
                            if r < rows && c < cols {
                                out[r * cols + c] = word;
                            }
                        }
                        let high = codes.high_freq_count() as usize;
                        h_cursor += high;
                        l_cursor += FRAG_ELEMS - high;
                    }
                }
            }
        }
    }
    WeightMatrix::new(rows, cols, out)
}

/// First disagreement found by a round-trip comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mismatch {
    pub row: usize,
    pub col: usize,
    pub expected: Bf16Word,
    pub actual: Bf16Word,
    /// Which decoder produced the disagreement.
    pub decoder: &'static str,
}

/// Outcome of a full compress / serialize / decode / compare cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundtripReport {
    pub ok: bool,
    pub first_mismatch: Option<Mismatch>,
    pub compression_ratio: f64,
    pub bits_per_element: f64,
    /// Coverage of the selected window over the logical elements.
    pub window_coverage: f64,
    pub base_exp: i16,
    pub container_bytes: usize,
}

/// Compress, serialize, reparse, decode through both decoders, and compare
/// everything bitwise against the input.
pub fn verify_roundtrip(w: &WeightMatrix) -> Result<RoundtripReport> {
    let hist = compute_histogram(w.data());
    let window = select_window(&hist)?;
    let compressed = compress(w)?;
    let bytes = container::serialize(&compressed);
    let reparsed = container::deserialize(&bytes)?;

    let mut first_mismatch = None;
    for (decoder, decoded) in [
        ("reference", decompress_reference(&reparsed)?),
        ("warp", decompress_warp(&reparsed)?),
    ] {
        if first_mismatch.is_none() {
            first_mismatch = find_mismatch(w, &decoded, decoder);
        }
    }
    Ok(RoundtripReport {
        ok: first_mismatch.is_none(),
        first_mismatch,
        compression_ratio: compressed.compression_ratio(),
        bits_per_element: compressed.bits_per_element(),
        window_coverage: window_coverage(&hist, &window),
        base_exp: compressed.header().base_exp,
        container_bytes: bytes.len(),
    })
}

fn find_mismatch(
    expected: &WeightMatrix,
    actual: &WeightMatrix,
    decoder: &'static str,
) -> Option<Mismatch> {
    for r in 0..expected.rows() {
        for c in 0..expected.cols() {
            if expected.get(r, c) != actual.get(r, c) {
                return Some(Mismatch {
                    row: r,
                    col: c,
                    expected: expected.get(r, c),
                    actual: actual.get(r, c),
                    decoder,
                });
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: Bf16Word = Bf16Word(0x3F80); // 1.0, exponent field 127
    const QNAN: Bf16Word = Bf16Word(0x7FC0);

    fn constant_matrix(rows: usize, cols: usize, word: Bf16Word) -> WeightMatrix {
        WeightMatrix::new(rows, cols, vec![word; rows * cols]).unwrap()
    }

    #[test]
    fn all_ones_selects_tied_window_and_packs_everything_high() {
        let w = constant_matrix(8, 8, ONE);
        let m = compress(&w).unwrap();
        // Window ties break to the smallest start containing 127.
        assert_eq!(m.header().base_exp, 120);
        assert_eq!(m.header().padded_rows, 64);
        assert_eq!(m.header().padded_cols, 64);
        // Every logical element gets codeword 127 - 120 = 7; padding gets 1.
        let codes = m.frag_codes(0);
        assert_eq!(codes.code_at(0), 7);
        assert!(m.high_freq_buffer().iter().all(|&b| b == 0));
        assert!(m.full_value_buffer().is_empty());
        assert_eq!(m.in_window_fraction(), 1.0);
        let back = decompress_reference(&m).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn nan_outside_window_lands_in_fallback_verbatim() {
        let mut data = vec![ONE; 64];
        for slot in [5usize, 17, 40, 63] {
            data[slot] = QNAN;
        }
        let w = WeightMatrix::new(8, 8, data).unwrap();
        let m = compress(&w).unwrap();
        assert_eq!(m.header().base_exp, 120);
        let fallback = m.full_value_buffer();
        assert_eq!(fallback.iter().filter(|&&x| x == QNAN).count(), 4);
        assert_eq!(decompress_reference(&m).unwrap(), w);
        assert_eq!(decompress_warp(&m).unwrap(), w);
    }

    #[test]
    fn degenerate_one_by_one_roundtrips() {
        let w = constant_matrix(1, 1, Bf16Word(0xABCD));
        let m = compress(&w).unwrap();
        assert_eq!(m.header().padded_rows, 64);
        let back = decompress_reference(&m).unwrap();
        assert_eq!(back.rows(), 1);
        assert_eq!(back.cols(), 1);
        assert_eq!(back.get(0, 0), Bf16Word(0xABCD));
    }

    #[test]
    fn empty_matrix_rejected() {
        assert_eq!(
            compress(&WeightMatrix::new(0, 5, vec![]).unwrap()),
            Err(Error::EmptyMatrix)
        );
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(matches!(
            WeightMatrix::new(2, 3, vec![Bf16Word::ZERO; 5]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn forced_window_can_miss_everything() {
        // Exponent 127 data with a window at [1, 7]: all logical elements
        // fall back, only padding is high-frequency.
        let w = constant_matrix(8, 8, ONE);
        let m = compress_with_window(&w, 0).unwrap();
        assert_eq!(m.full_value_buffer().iter().filter(|&&x| x == ONE).count(), 64);
        assert_eq!(decompress_reference(&m).unwrap(), w);
        assert_eq!(decompress_warp(&m).unwrap(), w);
    }

    #[test]
    fn bad_window_base_rejected() {
        let w = constant_matrix(1, 1, ONE);
        assert_eq!(compress_with_window(&w, -2), Err(Error::BadBaseExp(-2)));
        assert_eq!(compress_with_window(&w, 249), Err(Error::BadBaseExp(249)));
    }

    #[test]
    fn worker_count_does_not_change_bytes() {
        // 192x320 = 15 blocks with mixed content.
        let mut data = Vec::with_capacity(192 * 320);
        let mut state = 1u32;
        for _ in 0..192 * 320 {
            state = state.wrapping_mul(1664525).wrapping_add(1013904223);
            data.push(Bf16Word((state >> 16) as u16));
        }
        let w = WeightMatrix::new(192, 320, data).unwrap();
        let single = container::serialize(&compress_with_workers(&w, 1).unwrap());
        let multi = container::serialize(&compress_with_workers(&w, 4).unwrap());
        assert_eq!(single, multi);
    }

    #[test]
    fn verify_roundtrip_reports_success() {
        // Odd dims exercise trim; padding dominates the payload here, so
        // no ratio claim is made for this shape.
        let w = constant_matrix(65, 63, Bf16Word(0x3F00));
        let report = verify_roundtrip(&w).unwrap();
        assert!(report.ok, "{:?}", report.first_mismatch);
        assert_eq!(report.window_coverage, 1.0);

        // Block-aligned dims do compress: 11 bits/element plus offsets.
        let w = constant_matrix(256, 256, Bf16Word(0x3F00));
        let report = verify_roundtrip(&w).unwrap();
        assert!(report.ok);
        assert!(report.compression_ratio > 1.4, "{}", report.compression_ratio);
    }

    #[test]
    fn reference_and_warp_agree_on_random_content() {
        let mut state = 0xC0FFEEu64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 32) as u16
        };
        for &(rows, cols) in &[(7usize, 9usize), (64, 64), (65, 63), (130, 70)] {
            let data: Vec<Bf16Word> = (0..rows * cols).map(|_| Bf16Word(next())).collect();
            let w = WeightMatrix::new(rows, cols, data).unwrap();
            let m = compress(&w).unwrap();
            let reference = decompress_reference(&m).unwrap();
            let warp = decompress_warp(&m).unwrap();
            assert_eq!(reference, w);
            assert_eq!(warp, w);
        }
    }
}
