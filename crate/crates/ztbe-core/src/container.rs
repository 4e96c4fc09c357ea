//! The on-disk container, "ZTBE" version 1.
//!
//! All fields little-endian:
//!
//! ```text
//! magic "ZTBE" (4) | version u16 | flags u16 |
//! logical_rows u32 | logical_cols u32 | padded_rows u32 | padded_cols u32 |
//! base_exp i16 | pad_word u16 |
//! n_fragtiles u64 | h_len_bytes u64 | l_len_words u64 | n_blocktiles u64 |
//! B1 (n_fragtiles x 8) | B2 | B3 |
//! offsets (n_blocktiles x (u64 h_start_bytes, u64 l_start_bytes)) |
//! H (h_len_bytes) | L (l_len_words x 2)
//! ```
//!
//! Parsing rejects bad magic, unknown versions, truncation, trailing
//! bytes, and any structural inconsistency, each with its own error class.

use crate::bf16::Bf16Word;
use crate::error::{Error, Result};
use crate::format::{BlockOffsets, CompressedMatrix, Header};

pub const MAGIC: [u8; 4] = *b"ZTBE";
pub const VERSION: u16 = 1;

/// Fixed-size header length in bytes.
pub const HEADER_LEN: usize = 60;

/// Encode a compressed matrix into the container byte layout.
pub fn serialize(m: &CompressedMatrix) -> Vec<u8> {
    let (b1, b2, b3) = m.bitplanes();
    let h = m.high_freq_buffer();
    let l = m.full_value_buffer();
    let total = HEADER_LEN
        + 8 * 3 * b1.len()
        + 16 * m.offsets().len()
        + h.len()
        + 2 * l.len();
    let mut out = Vec::with_capacity(total);
    let hdr = m.header();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes()); // flags
    out.extend_from_slice(&hdr.logical_rows.to_le_bytes());
    out.extend_from_slice(&hdr.logical_cols.to_le_bytes());
    out.extend_from_slice(&hdr.padded_rows.to_le_bytes());
    out.extend_from_slice(&hdr.padded_cols.to_le_bytes());
    out.extend_from_slice(&hdr.base_exp.to_le_bytes());
    out.extend_from_slice(&hdr.pad_word.bits().to_le_bytes());
    out.extend_from_slice(&(b1.len() as u64).to_le_bytes());
    out.extend_from_slice(&(h.len() as u64).to_le_bytes());
    out.extend_from_slice(&(l.len() as u64).to_le_bytes());
    out.extend_from_slice(&(m.offsets().len() as u64).to_le_bytes());
    for plane in [b1, b2, b3] {
        for word in plane {
            out.extend_from_slice(&word.to_le_bytes());
        }
    }
    for off in m.offsets() {
        out.extend_from_slice(&off.h_start_bytes.to_le_bytes());
        out.extend_from_slice(&off.l_start_bytes.to_le_bytes());
    }
    out.extend_from_slice(h);
    for word in l {
        out.extend_from_slice(&word.bits().to_le_bytes());
    }
    debug_assert_eq!(out.len(), total);
    out
}

/// Parse and validate a container.
pub fn deserialize(bytes: &[u8]) -> Result<CompressedMatrix> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let flags = r.u16()?;
    if flags != 0 {
        return Err(Error::InvalidHeader(format!("unknown flags {flags:#06x}")));
    }
    let header = Header {
        logical_rows: r.u32()?,
        logical_cols: r.u32()?,
        padded_rows: r.u32()?,
        padded_cols: r.u32()?,
        base_exp: r.i16()?,
        pad_word: Bf16Word(r.u16()?),
    };
    let n_fragtiles = r.u64()?;
    let h_len_bytes = r.u64()?;
    let l_len_words = r.u64()?;
    let n_blocktiles = r.u64()?;

    // Cross-check declared counts against the dimensions and the actual
    // input size before allocating anything; forged counts must not drive
    // allocations or arithmetic.
    if !header.padded_rows.is_multiple_of(64) || !header.padded_cols.is_multiple_of(64) {
        return Err(Error::InvalidHeader(format!(
            "padded dims ({}, {}) not block multiples",
            header.padded_rows, header.padded_cols
        )));
    }
    let expect_frag = (header.padded_rows as u64 / 8) * (header.padded_cols as u64 / 8);
    if n_fragtiles != expect_frag {
        return Err(Error::InvalidHeader(format!(
            "declared fragment count {n_fragtiles} != {expect_frag} from dims"
        )));
    }
    let expect_blocks = (header.padded_rows as u64 / 64) * (header.padded_cols as u64 / 64);
    if n_blocktiles != expect_blocks {
        return Err(Error::InvalidHeader(format!(
            "declared block count {n_blocktiles} != {expect_blocks} from dims"
        )));
    }
    let body = (bytes.len() - HEADER_LEN) as u128;
    let declared = 24 * n_fragtiles as u128
        + 16 * n_blocktiles as u128
        + h_len_bytes as u128
        + 2 * l_len_words as u128;
    if declared > body {
        return Err(Error::Truncated {
            offset: HEADER_LEN,
            needed: usize::try_from(declared).unwrap_or(usize::MAX),
        });
    }
    if declared < body {
        return Err(Error::TrailingBytes((body - declared) as usize));
    }
    let n_fragtiles = n_fragtiles as usize;
    let h_len_bytes = h_len_bytes as usize;
    let l_len_words = l_len_words as usize;
    let n_blocktiles = n_blocktiles as usize;

    let mut planes = Vec::with_capacity(3);
    for _ in 0..3 {
        let raw = r.take(8 * n_fragtiles)?;
        planes.push(
            raw.chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<u64>>(),
        );
    }
    let b3 = planes.pop().unwrap();
    let b2 = planes.pop().unwrap();
    let b1 = planes.pop().unwrap();

    let mut offsets = Vec::with_capacity(n_blocktiles);
    for _ in 0..n_blocktiles {
        offsets.push(BlockOffsets {
            h_start_bytes: r.u64()?,
            l_start_bytes: r.u64()?,
        });
    }
    let h = r.take(h_len_bytes)?.to_vec();
    let l = r
        .take(2 * l_len_words)?
        .chunks_exact(2)
        .map(|c| Bf16Word(u16::from_le_bytes(c.try_into().unwrap())))
        .collect::<Vec<Bf16Word>>();

    debug_assert_eq!(r.pos, bytes.len());
    CompressedMatrix::from_parts(header, b1, b2, b3, h, l, offsets)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn i16(&mut self) -> Result<i16> {
        Ok(i16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_magic() {
        let err = deserialize(b"NOPE\x01\x00\x00\x00").unwrap_err();
        assert_eq!(err, Error::BadMagic(*b"NOPE"));
    }

    #[test]
    fn rejects_unknown_version() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&9u16.to_le_bytes());
        bytes.extend_from_slice(&0u16.to_le_bytes());
        assert_eq!(deserialize(&bytes).unwrap_err(), Error::UnsupportedVersion(9));
    }

    #[test]
    fn rejects_short_input() {
        assert!(matches!(
            deserialize(b"ZT"),
            Err(Error::Truncated { .. })
        ));
    }
}
