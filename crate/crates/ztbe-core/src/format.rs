//! The in-memory compressed-matrix representation.
//!
//! Per fragment, the 3-bit codewords are stored as three 64-bit bit-planes
//! (least-significant codeword bit in plane 1). Codeword 0 marks a
//! fallback element kept verbatim in the full-value buffer; codewords 1..7
//! index the seven window exponents and pair with one packed sign/mantissa
//! byte in the high-frequency buffer. Both value buffers are segmented per
//! block tile, each segment start 16-byte aligned and zero-padded, with a
//! per-block offset table.

use crate::analysis::WINDOW_WIDTH;
use crate::bf16::Bf16Word;
use crate::error::{Error, Result};
use crate::tile::{self, BLOCK_DIM, FRAGS_PER_BLOCK, FRAG_ELEMS};

/// Segment alignment in bytes (128 bits).
pub const SEGMENT_ALIGN: usize = 16;

/// Round a byte count up to the segment alignment.
#[inline]
pub(crate) fn align_segment(bytes: usize) -> usize {
    (bytes + SEGMENT_ALIGN - 1) & !(SEGMENT_ALIGN - 1)
}

/// The three bit-planes of one fragment's codewords.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FragTileCode {
    pub b1: u64,
    pub b2: u64,
    pub b3: u64,
}

impl FragTileCode {
    /// Spatial indicator: bit p set means position p took the
    /// high-frequency path.
    #[inline]
    pub fn indicator(&self) -> u64 {
        self.b1 | self.b2 | self.b3
    }

    /// Codeword at a fragment position, in [0, 7].
    #[inline]
    pub fn code_at(&self, pos: usize) -> u8 {
        debug_assert!(pos < FRAG_ELEMS);
        (((self.b3 >> pos) & 1) << 2 | ((self.b2 >> pos) & 1) << 1 | ((self.b1 >> pos) & 1)) as u8
    }

    /// Number of high-frequency elements in the fragment.
    #[inline]
    pub fn high_freq_count(&self) -> u32 {
        self.indicator().count_ones()
    }

    /// Record a nonzero codeword at a position (positions default to the
    /// fallback code 0).
    #[inline]
    pub fn set_code(&mut self, pos: usize, code: u8) {
        debug_assert!(pos < FRAG_ELEMS && (1..=WINDOW_WIDTH).contains(&code));
        self.b1 |= ((code & 1) as u64) << pos;
        self.b2 |= (((code >> 1) & 1) as u64) << pos;
        self.b3 |= (((code >> 2) & 1) as u64) << pos;
    }
}

/// Logical and padded dimensions plus the window parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub logical_rows: u32,
    pub logical_cols: u32,
    pub padded_rows: u32,
    pub padded_cols: u32,
    /// min(window) - 1, in [-1, 248].
    pub base_exp: i16,
    /// Word used for padding elements beyond the logical dimensions.
    pub pad_word: Bf16Word,
}

/// Byte offsets of one block's segments into the value buffers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockOffsets {
    pub h_start_bytes: u64,
    pub l_start_bytes: u64,
}

/// Per-buffer payload accounting, in bits. Segment padding counts toward
/// the buffer that carries it; the fixed-size header does not count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PayloadBreakdown {
    pub bitplane_bits: u64,
    pub h_bits: u64,
    pub l_bits: u64,
    pub offset_bits: u64,
}

impl PayloadBreakdown {
    pub fn total(&self) -> u64 {
        self.bitplane_bits + self.h_bits + self.l_bits + self.offset_bits
    }
}

/// A fully encoded matrix. Immutable after construction; every accessor
/// is read-only, so concurrent decoding needs no synchronization.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedMatrix {
    header: Header,
    b1: Vec<u64>,
    b2: Vec<u64>,
    b3: Vec<u64>,
    h: Vec<u8>,
    l: Vec<Bf16Word>,
    offsets: Vec<BlockOffsets>,
}

impl CompressedMatrix {
    /// Assemble from parts, enforcing every structural invariant. Both the
    /// compressor and the container parser construct through here, so a
    /// value of this type is always internally consistent.
    pub fn from_parts(
        header: Header,
        b1: Vec<u64>,
        b2: Vec<u64>,
        b3: Vec<u64>,
        h: Vec<u8>,
        l: Vec<Bf16Word>,
        offsets: Vec<BlockOffsets>,
    ) -> Result<CompressedMatrix> {
        let m = CompressedMatrix {
            header,
            b1,
            b2,
            b3,
            h,
            l,
            offsets,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn bitplanes(&self) -> (&[u64], &[u64], &[u64]) {
        (&self.b1, &self.b2, &self.b3)
    }

    pub fn high_freq_buffer(&self) -> &[u8] {
        &self.h
    }

    pub fn full_value_buffer(&self) -> &[Bf16Word] {
        &self.l
    }

    pub fn offsets(&self) -> &[BlockOffsets] {
        &self.offsets
    }

    pub fn n_fragtiles(&self) -> usize {
        self.b1.len()
    }

    pub fn n_blocktiles(&self) -> usize {
        self.offsets.len()
    }

    /// Block grid shape (rows, cols).
    pub fn block_grid(&self) -> (usize, usize) {
        (
            self.header.padded_rows as usize / BLOCK_DIM,
            self.header.padded_cols as usize / BLOCK_DIM,
        )
    }

    /// Codeword planes of one fragment by canonical linear index.
    pub fn frag_codes(&self, frag_linear: usize) -> FragTileCode {
        FragTileCode {
            b1: self.b1[frag_linear],
            b2: self.b2[frag_linear],
            b3: self.b3[frag_linear],
        }
    }

    /// One block's high-frequency segment (content plus alignment padding).
    pub fn block_h_segment(&self, block: usize) -> &[u8] {
        let start = self.offsets[block].h_start_bytes as usize;
        let end = self
            .offsets
            .get(block + 1)
            .map_or(self.h.len(), |o| o.h_start_bytes as usize);
        &self.h[start..end]
    }

    /// One block's full-value segment, as words.
    pub fn block_l_segment(&self, block: usize) -> &[Bf16Word] {
        let start = self.offsets[block].l_start_bytes as usize / 2;
        let end = self
            .offsets
            .get(block + 1)
            .map_or(self.l.len(), |o| o.l_start_bytes as usize / 2);
        &self.l[start..end]
    }

    /// Total stored payload, header excluded.
    pub fn payload_breakdown(&self) -> PayloadBreakdown {
        PayloadBreakdown {
            bitplane_bits: 3 * 64 * self.n_fragtiles() as u64,
            h_bits: 8 * self.h.len() as u64,
            l_bits: 16 * self.l.len() as u64,
            offset_bits: 128 * self.n_blocktiles() as u64,
        }
    }

    pub fn payload_bits(&self) -> u64 {
        self.payload_breakdown().total()
    }

    /// Stored payload bits per logical element.
    pub fn bits_per_element(&self) -> f64 {
        let logical = self.header.logical_rows as u64 * self.header.logical_cols as u64;
        self.payload_bits() as f64 / logical as f64
    }

    /// Raw size over payload size: 16 bits per logical element versus the
    /// stored payload.
    pub fn compression_ratio(&self) -> f64 {
        16.0 / self.bits_per_element()
    }

    /// Fraction of padded elements on the high-frequency path.
    pub fn in_window_fraction(&self) -> f64 {
        let high: u64 = self
            .b1
            .iter()
            .zip(&self.b2)
            .zip(&self.b3)
            .map(|((&b1, &b2), &b3)| (b1 | b2 | b3).count_ones() as u64)
            .sum();
        let padded = self.header.padded_rows as u64 * self.header.padded_cols as u64;
        high as f64 / padded as f64
    }

    fn validate(&self) -> Result<()> {
        let h = &self.header;
        if h.logical_rows == 0 || h.logical_cols == 0 {
            return Err(Error::InvalidHeader("zero logical dimension".into()));
        }
        if h.padded_rows as usize != tile::pad_dim(h.logical_rows as usize)
            || h.padded_cols as usize != tile::pad_dim(h.logical_cols as usize)
        {
            return Err(Error::InvalidHeader(format!(
                "padded dims ({}, {}) are not the minimal block multiple of ({}, {})",
                h.padded_rows, h.padded_cols, h.logical_rows, h.logical_cols
            )));
        }
        if !(-1..=248).contains(&h.base_exp) {
            return Err(Error::InvalidHeader(format!(
                "base exponent {} out of [-1, 248]",
                h.base_exp
            )));
        }
        let n_frag = (h.padded_rows as usize / 8) * (h.padded_cols as usize / 8);
        if self.b1.len() != n_frag || self.b2.len() != n_frag || self.b3.len() != n_frag {
            return Err(Error::InvalidHeader(format!(
                "bit-plane length {} != fragment count {}",
                self.b1.len(),
                n_frag
            )));
        }
        let n_blocks = (h.padded_rows as usize / BLOCK_DIM) * (h.padded_cols as usize / BLOCK_DIM);
        if self.offsets.len() != n_blocks {
            return Err(Error::InvalidHeader(format!(
                "offset table length {} != block count {}",
                self.offsets.len(),
                n_blocks
            )));
        }
        self.validate_segments()?;
        Ok(())
    }

    /// Check offset ordering/alignment and the popcount-derived segment
    /// spans, including zero padding.
    fn validate_segments(&self) -> Result<()> {
        let mut expect_h = 0usize;
        let mut expect_l_bytes = 0usize;
        for (block, off) in self.offsets.iter().enumerate() {
            let h_start = off.h_start_bytes as usize;
            let l_start = off.l_start_bytes as usize;
            if !h_start.is_multiple_of(SEGMENT_ALIGN) || !l_start.is_multiple_of(SEGMENT_ALIGN) {
                return Err(Error::BadOffsets(format!(
                    "block {block} offsets ({h_start}, {l_start}) not {SEGMENT_ALIGN}-byte aligned"
                )));
            }
            if h_start != expect_h || l_start != expect_l_bytes {
                // Distinguish plain disorder from popcount disagreement:
                // ordering violations are offset errors; ordered-but-wrong
                // spans mean the bit-planes disagree with the segments.
                if block > 0
                    && (h_start < self.offsets[block - 1].h_start_bytes as usize
                        || l_start < self.offsets[block - 1].l_start_bytes as usize)
                {
                    return Err(Error::BadOffsets(format!(
                        "block {block} offsets decrease"
                    )));
                }
                return Err(Error::PopcountMismatch {
                    block,
                    detail: format!(
                        "segment starts ({h_start}, {l_start}) != scan-derived ({expect_h}, {expect_l_bytes})"
                    ),
                });
            }
            let high: usize = (0..FRAGS_PER_BLOCK)
                .map(|f| {
                    self.frag_codes(block * FRAGS_PER_BLOCK + f)
                        .high_freq_count() as usize
                })
                .sum();
            let low = FRAGS_PER_BLOCK * FRAG_ELEMS - high;
            expect_h = align_segment(h_start + high);
            expect_l_bytes = align_segment(l_start + 2 * low);
            if expect_h > self.h.len() || expect_l_bytes > 2 * self.l.len() {
                return Err(Error::PopcountMismatch {
                    block,
                    detail: format!(
                        "segment end ({expect_h}, {expect_l_bytes}) past buffer end ({}, {})",
                        self.h.len(),
                        2 * self.l.len()
                    ),
                });
            }
            if self.h[h_start + high..expect_h].iter().any(|&b| b != 0) {
                return Err(Error::NonZeroPadding {
                    block,
                    buffer: "high-frequency",
                });
            }
            for word in &self.l[l_start / 2 + low..expect_l_bytes / 2] {
                if word.bits() != 0 {
                    return Err(Error::NonZeroPadding {
                        block,
                        buffer: "full-value",
                    });
                }
            }
        }
        if expect_h != self.h.len() {
            return Err(Error::PopcountMismatch {
                block: self.offsets.len().saturating_sub(1),
                detail: format!(
                    "high-frequency buffer length {} != scan end {expect_h}",
                    self.h.len()
                ),
            });
        }
        if expect_l_bytes != 2 * self.l.len() {
            return Err(Error::PopcountMismatch {
                block: self.offsets.len().saturating_sub(1),
                detail: format!(
                    "full-value buffer length {} words != scan end {} bytes",
                    self.l.len(),
                    expect_l_bytes
                ),
            });
        }
        Ok(())
    }
}
