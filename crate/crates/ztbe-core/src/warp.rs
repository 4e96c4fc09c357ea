//! Lockstep 32-lane fragment decoder.
//!
//! Models the per-thread decode of one 8x8 fragment: lane l owns the two
//! elements at positions 2l and 2l+1. Each slot's read offset comes from
//! popcount addressing over the spatial indicator (ones below the position
//! for the high-frequency buffer, zeros below for the fallback buffer), so
//! every lane executes the identical straight-line instruction sequence
//! and only the final buffer read is selected by the indicator bit. There
//! is no data-dependent iteration anywhere on the path; the per-slot
//! operation count is recorded in the trace so tests can assert it is
//! lane-invariant.

use crate::bf16::{assemble_unchecked, unpack_sm, Bf16Word, PackedSm};
use crate::error::{Error, Result};
use crate::format::FragTileCode;
use crate::tile::FRAG_ELEMS;

/// Lanes per warp.
pub const WARP_LANES: usize = 32;

/// Everything one lane computes for one of its two element slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaneTrace {
    pub lane: u8,
    /// Element slot within the lane, 0 or 1.
    pub slot: u8,
    /// Fragment position p = 2*lane + slot.
    pub pos: u8,
    /// Indicator bit at p: true = high-frequency path.
    pub high_path: bool,
    /// Ones below p in the indicator (high-frequency read offset).
    pub idx_high: u32,
    /// Zeros below p in the indicator (fallback read offset).
    pub idx_low: u32,
    /// Codeword reconstructed from the three planes (0 on the fallback path).
    pub code: u8,
    /// Reconstructed exponent, high-frequency path only.
    pub exponent: Option<u8>,
    pub word: Bf16Word,
    /// Primitive operations executed for this slot; identical across lanes.
    pub ops: u32,
}

/// Decode one lane's two elements.
///
/// `frag_h_start` / `frag_l_start` index the fragment's first entry within
/// the block segments, as produced by the popcount prefix scan over the
/// preceding fragments. Fails with a corruption error if a selected read
/// falls outside its segment.
pub fn decode_lane(
    frag: &FragTileCode,
    h_seg: &[u8],
    l_seg: &[Bf16Word],
    frag_h_start: usize,
    frag_l_start: usize,
    base_exp: i16,
    lane: usize,
) -> Result<(Bf16Word, Bf16Word)> {
    debug_assert!(lane < WARP_LANES);
    let first = decode_slot(frag, h_seg, l_seg, frag_h_start, frag_l_start, base_exp, lane, 0)?;
    let second = decode_slot(frag, h_seg, l_seg, frag_h_start, frag_l_start, base_exp, lane, 1)?;
    Ok((first.word, second.word))
}

/// Decode a whole fragment in lockstep: each slot is executed for all 32
/// lanes before the next, and the result is ordered by position.
pub fn decode_fragment_warp(
    frag: &FragTileCode,
    h_seg: &[u8],
    l_seg: &[Bf16Word],
    frag_h_start: usize,
    frag_l_start: usize,
    base_exp: i16,
) -> Result<[Bf16Word; 64]> {
    let mut out = [Bf16Word::ZERO; FRAG_ELEMS];
    for slot in 0..2u8 {
        for lane in 0..WARP_LANES {
            let t = decode_slot(
                frag,
                h_seg,
                l_seg,
                frag_h_start,
                frag_l_start,
                base_exp,
                lane,
                slot,
            )?;
            out[t.pos as usize] = t.word;
        }
    }
    Ok(out)
}

/// Like [`decode_fragment_warp`] but returns the full per-slot traces,
/// ordered by position.
pub fn trace_fragment_warp(
    frag: &FragTileCode,
    h_seg: &[u8],
    l_seg: &[Bf16Word],
    frag_h_start: usize,
    frag_l_start: usize,
    base_exp: i16,
) -> Result<Vec<LaneTrace>> {
    let mut traces = vec![None; FRAG_ELEMS];
    for slot in 0..2u8 {
        for lane in 0..WARP_LANES {
            let t = decode_slot(
                frag,
                h_seg,
                l_seg,
                frag_h_start,
                frag_l_start,
                base_exp,
                lane,
                slot,
            )?;
            traces[t.pos as usize] = Some(t);
        }
    }
    Ok(traces.into_iter().map(Option::unwrap).collect())
}

#[allow(clippy::too_many_arguments)]
fn decode_slot(
    frag: &FragTileCode,
    h_seg: &[u8],
    l_seg: &[Bf16Word],
    frag_h_start: usize,
    frag_l_start: usize,
    base_exp: i16,
    lane: usize,
    slot: u8,
) -> Result<LaneTrace> {
    let mut ops = 0u32;

    // Index math runs unconditionally for both paths; the indicator bit
    // only selects which buffer the single load hits.
    let pos = 2 * lane + slot as usize;
    ops += 1;
    let indicator = frag.indicator();
    ops += 1;
    let below = (1u64 << pos) - 1;
    ops += 2;
    let idx_high = (indicator & below).count_ones();
    ops += 2;
    let idx_low = pos as u32 - idx_high;
    ops += 1;
    let high_path = (indicator >> pos) & 1 == 1;
    ops += 2;
    let code = frag.code_at(pos);
    ops += 5;
    let exponent = base_exp + code as i16;
    ops += 1;

    let word = if high_path {
        let offset = frag_h_start + idx_high as usize;
        let byte = *h_seg.get(offset).ok_or_else(|| {
            Error::Corrupt(format!(
                "high-frequency offset {offset} >= segment length {}",
                h_seg.len()
            ))
        })?;
        let (sign, mantissa) = unpack_sm(PackedSm(byte));
        assemble_unchecked(sign, exponent as u8, mantissa)
    } else {
        let offset = frag_l_start + idx_low as usize;
        *l_seg.get(offset).ok_or_else(|| {
            Error::Corrupt(format!(
                "fallback offset {offset} >= segment length {}",
                l_seg.len()
            ))
        })?
    };
    ops += 3; // predicated load + reassembly/select

    Ok(LaneTrace {
        lane: lane as u8,
        slot,
        pos: pos as u8,
        high_path,
        idx_high,
        idx_low,
        code: if high_path { code } else { 0 },
        exponent: high_path.then_some(exponent as u8),
        word,
        ops,
    })
}
