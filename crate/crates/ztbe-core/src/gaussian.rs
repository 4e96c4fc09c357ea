//! Gaussian model of the exponent distribution.
//!
//! For zero-mean normal weights, the probability that a value's magnitude
//! lands in the binade [2^x, 2^(x+1)) has a closed form in the error
//! function. The resulting integer distribution is unimodal, and any
//! unimodal distribution has contiguous top-K sets; both facts are exposed
//! here as checkable predicates because the codec's fixed-window design
//! rests on them.

use crate::error::{Error, Result};

/// Tolerance used when comparing adjacent pmf values; erf differences of
/// near-equal arguments cancel, so exact comparisons are too strict.
pub const UNIMODAL_TOL: f64 = 1e-12;

/// Zero-mean Gaussian weight model parameterized by its standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianExponentModel {
    sigma: f64,
}

impl GaussianExponentModel {
    pub fn new(sigma: f64) -> Result<GaussianExponentModel> {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::NonPositiveSigma(sigma));
        }
        Ok(GaussianExponentModel { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// P(2^x <= |w| < 2^(x+1)) = erf(2^(x+1)/(sigma*sqrt(2))) - erf(2^x/(sigma*sqrt(2))).
    ///
    /// `x` is the unbiased exponent value (raw field minus 127).
    pub fn pmf(&self, x: i32) -> f64 {
        let scale = self.sigma * std::f64::consts::SQRT_2;
        let lo = exp2_i32(x) / scale;
        libm::erf(2.0 * lo) - libm::erf(lo)
    }

    /// The integer exponent with maximal probability.
    ///
    /// The continuous extension peaks where 2^x = sigma*sqrt(2)*u0 with
    /// u0 = sqrt(ln 2 / 3); the discrete argmax is whichever neighbor of
    /// that point has the larger pmf.
    pub fn mode(&self) -> i32 {
        let u0 = (std::f64::consts::LN_2 / 3.0).sqrt();
        let x_star = (self.sigma * std::f64::consts::SQRT_2 * u0).log2();
        let lo = x_star.floor() as i32;
        let hi = x_star.ceil() as i32;
        if self.pmf(lo) >= self.pmf(hi) {
            lo
        } else {
            hi
        }
    }

    /// Pmf values over an inclusive integer range, for scanning.
    pub fn pmf_over(&self, range: std::ops::RangeInclusive<i32>) -> Vec<f64> {
        range.map(|x| self.pmf(x)).collect()
    }
}

/// Exact powers of two, including the deep-negative exponents the f64
/// format still represents.
fn exp2_i32(x: i32) -> f64 {
    (x as f64).exp2()
}

/// Whether a sequence rises to a single peak and then falls, with a flat
/// run at the peak allowed. Returns the index of the (first) maximum when
/// unimodal.
pub fn check_unimodal(values: &[f64]) -> (bool, Option<usize>) {
    if values.is_empty() {
        return (false, None);
    }
    let mut peak = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v > values[peak] {
            peak = i;
        }
    }
    for i in 0..values.len() - 1 {
        if i < peak {
            if values[i + 1] < values[i] - UNIMODAL_TOL {
                return (false, None);
            }
        } else if values[i + 1] > values[i] + UNIMODAL_TOL {
            return (false, None);
        }
    }
    (true, Some(peak))
}

/// Whether the K most probable positions form a contiguous run of indices.
/// Ties break toward the smaller index so the result is deterministic.
pub fn top_k_contiguous(values: &[f64], k: usize) -> bool {
    if k == 0 || k > values.len() {
        return k == 0;
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let top = &mut order[..k];
    top.sort_unstable();
    top[k - 1] - top[0] == k - 1
}
