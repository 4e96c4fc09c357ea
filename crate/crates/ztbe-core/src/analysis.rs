//! Exponent-distribution profiling and codeword-cost analysis.
//!
//! The compressor picks, per matrix, the 7 consecutive exponent values
//! with maximal coverage; everything here feeds that choice and reports
//! how good it is: histograms, window selection, top-k coverage ratios,
//! Shannon entropy, and the expected bits-per-element cost of an n-bit
//! codeword scheme.

use crate::bf16::Bf16Word;
use crate::error::{Error, Result};

/// Width of the exponent window: codewords 1..=7 index seven values.
pub const WINDOW_WIDTH: u8 = 7;

/// Histogram of the 256 possible raw exponent fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExponentHistogram {
    counts: [u64; 256],
    total: u64,
}

impl ExponentHistogram {
    pub fn counts(&self) -> &[u64; 256] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Build a histogram directly from counts (used by the Gaussian model
    /// and by tests); `total` is derived.
    pub fn from_counts(counts: [u64; 256]) -> ExponentHistogram {
        let total = counts.iter().sum();
        ExponentHistogram { counts, total }
    }
}

/// A window of seven consecutive exponent values, identified by the value
/// immediately below it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExponentWindow {
    /// min(window) - 1, in [-1, 248].
    pub base_exp: i16,
    /// Elements of the profiled input whose exponent lies in the window.
    pub covered: u64,
}

impl ExponentWindow {
    /// First exponent value inside the window.
    pub fn start(&self) -> u8 {
        (self.base_exp + 1) as u8
    }

    /// Last exponent value inside the window.
    pub fn end(&self) -> u8 {
        (self.base_exp + WINDOW_WIDTH as i16) as u8
    }

    /// Whether a raw exponent field falls inside the window.
    #[inline]
    pub fn contains(&self, exponent: u8) -> bool {
        let e = exponent as i16;
        e > self.base_exp && e <= self.base_exp + WINDOW_WIDTH as i16
    }
}

/// Count exponent-field occurrences over a slice of words.
pub fn compute_histogram(weights: &[Bf16Word]) -> ExponentHistogram {
    let mut counts = [0u64; 256];
    for w in weights {
        counts[w.exponent() as usize] += 1;
    }
    ExponentHistogram {
        counts,
        total: weights.len() as u64,
    }
}

/// Pick the 7-wide window maximizing covered count; ties break toward the
/// smallest window start.
pub fn select_window(hist: &ExponentHistogram) -> Result<ExponentWindow> {
    if hist.total == 0 {
        return Err(Error::EmptyHistogram);
    }
    let width = WINDOW_WIDTH as usize;
    let mut sum: u64 = hist.counts[..width].iter().sum();
    let mut best_sum = sum;
    let mut best_start = 0usize;
    for start in 1..=(256 - width) {
        sum = sum - hist.counts[start - 1] + hist.counts[start + width - 1];
        if sum > best_sum {
            best_sum = sum;
            best_start = start;
        }
    }
    Ok(ExponentWindow {
        base_exp: best_start as i16 - 1,
        covered: best_sum,
    })
}

/// Fraction of profiled elements covered by a window.
pub fn window_coverage(hist: &ExponentHistogram, window: &ExponentWindow) -> f64 {
    if hist.total == 0 {
        return 0.0;
    }
    window.covered as f64 / hist.total as f64
}

/// Fraction of total mass held by the 2^n - 1 largest bins, contiguous or
/// not. This is the coverage ratio r_n that drives the codeword-width
/// trade-off.
pub fn coverage_ratio_topk(hist: &ExponentHistogram, codeword_bits: u32) -> Result<f64> {
    if !(1..=8).contains(&codeword_bits) {
        return Err(Error::BadCodewordWidth(codeword_bits));
    }
    if hist.total == 0 {
        return Err(Error::EmptyHistogram);
    }
    let k = (1usize << codeword_bits) - 1;
    let mut sorted = hist.counts;
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let covered: u64 = sorted.iter().take(k).sum();
    Ok(covered as f64 / hist.total as f64)
}

/// Shannon entropy of the exponent distribution, in bits per symbol.
pub fn shannon_entropy(hist: &ExponentHistogram) -> f64 {
    if hist.total == 0 {
        return 0.0;
    }
    let total = hist.total as f64;
    hist.counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

/// Expected stored bits per element for an n-bit codeword scheme with
/// coverage ratio `r`: covered elements cost the codeword plus a packed
/// sign/mantissa byte, the rest cost the codeword plus a full word.
pub fn average_bits(codeword_bits: u32, coverage: f64) -> f64 {
    let n = codeword_bits as f64;
    coverage * (n + 8.0) + (1.0 - coverage) * (n + 16.0)
}
