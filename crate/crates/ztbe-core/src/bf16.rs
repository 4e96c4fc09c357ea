//! Bit-exact BFloat16 field manipulation.
//!
//! A BF16 word is 1 sign bit, 8 exponent bits, and 7 mantissa bits. The
//! codec never interprets words numerically: every 16-bit pattern (NaN,
//! Inf, subnormals, -0.0) is a valid payload and must round-trip exactly.
//! The only numeric bridge is the lossless widening to `f32` used by the
//! GEMM executors.

use crate::error::{Error, Result};

const SIGN_SHIFT: u32 = 15;
const EXP_SHIFT: u32 = 7;
const EXP_MASK: u16 = 0xFF;
const MAN_MASK: u16 = 0x7F;

/// A raw 16-bit BF16 pattern.
///
/// Equality and hashing are bitwise, so distinct NaN payloads and +0/-0
/// compare as different values. That is exactly what a lossless codec
/// needs; for arithmetic, widen with [`Bf16Word::to_f32`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Bf16Word(pub u16);

impl Bf16Word {
    /// Positive zero.
    pub const ZERO: Bf16Word = Bf16Word(0);

    pub const fn bits(self) -> u16 {
        self.0
    }

    /// Lossless widening: every BF16 value is exactly representable in f32.
    #[inline]
    pub fn to_f32(self) -> f32 {
        f32::from_bits((self.0 as u32) << 16)
    }

    /// Round-to-nearest-even conversion from f32, preserving NaN as the
    /// canonical quiet pattern (rounding alone can collapse small NaN
    /// payloads to infinity).
    #[inline]
    pub fn from_f32(value: f32) -> Bf16Word {
        let bits = value.to_bits();
        if value.is_nan() {
            let sign = ((bits >> 16) & 0x8000) as u16;
            return Bf16Word(sign | 0x7FC0);
        }
        let rounded = bits.wrapping_add(0x7FFF + ((bits >> 16) & 1));
        Bf16Word((rounded >> 16) as u16)
    }

    /// The raw 8-bit exponent field.
    #[inline]
    pub const fn exponent(self) -> u8 {
        ((self.0 >> EXP_SHIFT) & EXP_MASK) as u8
    }
}

/// The (sign, exponent, mantissa) decomposition of a BF16 word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldTriple {
    /// Sign bit, 0 or 1.
    pub sign: u8,
    /// Raw 8-bit exponent field (bias 127).
    pub exponent: u8,
    /// 7-bit mantissa, in [0, 127].
    pub mantissa: u8,
}

/// Sign and mantissa packed into one byte: bit 7 = sign, bits 6..0 = mantissa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PackedSm(pub u8);

/// Split a word into its three fields. Total for every pattern.
#[inline]
pub fn split_fields(w: Bf16Word) -> FieldTriple {
    FieldTriple {
        sign: (w.0 >> SIGN_SHIFT) as u8,
        exponent: w.exponent(),
        mantissa: (w.0 & MAN_MASK) as u8,
    }
}

/// Reassemble a word from its fields. Inverse of [`split_fields`].
///
/// Fails if `sign > 1` or `mantissa > 0x7F`; the exponent occupies a full
/// byte and is always in range.
#[inline]
pub fn assemble_fields(t: FieldTriple) -> Result<Bf16Word> {
    if t.sign > 1 {
        return Err(Error::FieldRange {
            field: "sign",
            value: t.sign as u32,
            max: 1,
        });
    }
    if t.mantissa > MAN_MASK as u8 {
        return Err(Error::FieldRange {
            field: "mantissa",
            value: t.mantissa as u32,
            max: MAN_MASK as u32,
        });
    }
    Ok(assemble_unchecked(t.sign, t.exponent, t.mantissa))
}

/// Assemble from fields already known to be in range (split output,
/// decoder-internal values).
#[inline]
pub(crate) fn assemble_unchecked(sign: u8, exponent: u8, mantissa: u8) -> Bf16Word {
    Bf16Word(((sign as u16) << SIGN_SHIFT) | ((exponent as u16) << EXP_SHIFT) | mantissa as u16)
}

/// Pack (sign, mantissa) into the 8-bit high-frequency representation.
#[inline]
pub fn pack_sm(sign: u8, mantissa: u8) -> PackedSm {
    debug_assert!(sign <= 1 && mantissa <= MAN_MASK as u8);
    PackedSm((sign << 7) | mantissa)
}

/// Inverse of [`pack_sm`].
#[inline]
pub fn unpack_sm(packed: PackedSm) -> (u8, u8) {
    (packed.0 >> 7, packed.0 & MAN_MASK as u8)
}
