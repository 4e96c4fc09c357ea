//! Analytical compute-intensity and roofline model.
//!
//! For Y = W X with W of M x K and X of K x N in BF16 (2 bytes) with f32
//! accumulation, the three execution styles move different weight traffic:
//!
//! * plain multiply: CI = MNK / (MK + KN + MN)
//! * decoupled decompress-then-multiply, compression ratio CR:
//!   CI = 2MNK / (MK(2/CR + 4) + 2(KN + MN))
//!   (compressed read, decompressed write, decompressed re-read)
//! * fused decode-multiply: CI = 2MNK / (MK * 2/CR + 2(KN + MN))
//!
//! Attainable throughput is the usual roofline min(peak, CI * bandwidth);
//! in the memory-bound regime the fused path's speedup over the plain
//! multiply approaches CR as N shrinks.

/// Problem shape: output rows M, token count N, reduction dim K.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GemmShape {
    pub m: u64,
    pub n: u64,
    pub k: u64,
}

impl GemmShape {
    pub fn new(m: u64, n: u64, k: u64) -> GemmShape {
        GemmShape { m, n, k }
    }
}

/// Weight compression ratio, original bytes over compressed bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionProfile {
    pub ratio: f64,
}

impl CompressionProfile {
    pub fn new(ratio: f64) -> CompressionProfile {
        debug_assert!(ratio > 0.0);
        CompressionProfile { ratio }
    }
}

/// Roofline ceiling parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardwareProfile {
    /// Peak throughput, FLOP/s.
    pub peak_flops: f64,
    /// Memory bandwidth, bytes/s.
    pub mem_bandwidth: f64,
}

/// Compute intensity of the plain multiply, FLOP per byte.
pub fn ci_gemm(s: &GemmShape) -> f64 {
    let (m, n, k) = (s.m as f64, s.n as f64, s.k as f64);
    m * n * k / (m * k + k * n + m * n)
}

/// Compute intensity of the decoupled pipeline.
pub fn ci_decoupled(s: &GemmShape, p: &CompressionProfile) -> f64 {
    let (m, n, k) = (s.m as f64, s.n as f64, s.k as f64);
    2.0 * m * n * k / (m * k * (2.0 / p.ratio + 4.0) + 2.0 * (k * n + m * n))
}

/// Compute intensity of the fused decode-multiply.
pub fn ci_fused(s: &GemmShape, p: &CompressionProfile) -> f64 {
    let (m, n, k) = (s.m as f64, s.n as f64, s.k as f64);
    2.0 * m * n * k / (m * k * (2.0 / p.ratio) + 2.0 * (k * n + m * n))
}

/// Attainable throughput under the roofline: min(peak, CI * bandwidth).
pub fn roofline_attainable(ci: f64, hw: &HardwareProfile) -> f64 {
    hw.peak_flops.min(ci * hw.mem_bandwidth)
}

/// Attainable fused throughput over attainable plain throughput.
pub fn predicted_speedup(s: &GemmShape, p: &CompressionProfile, hw: &HardwareProfile) -> f64 {
    roofline_attainable(ci_fused(s, p), hw) / roofline_attainable(ci_gemm(s), hw)
}

/// One row of the intensity-degradation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationRow {
    pub n: u64,
    pub ci_gemm: f64,
    pub ci_decoupled: f64,
    pub ci_fused: f64,
    /// Intensity lost by the decoupled pipeline, percent of the plain CI.
    pub degradation_pct: f64,
    /// Intensity gained by the fused path, percent of the plain CI.
    pub fused_gain_pct: f64,
}

/// Evaluate the three intensities across token counts at fixed M, K, CR.
pub fn degradation_report(m: u64, k: u64, n_values: &[u64], cr: f64) -> Vec<DegradationRow> {
    let profile = CompressionProfile::new(cr);
    n_values
        .iter()
        .map(|&n| {
            let shape = GemmShape::new(m, n, k);
            let gemm = ci_gemm(&shape);
            let decoupled = ci_decoupled(&shape, &profile);
            let fused = ci_fused(&shape, &profile);
            DegradationRow {
                n,
                ci_gemm: gemm,
                ci_decoupled: decoupled,
                ci_fused: fused,
                degradation_pct: 100.0 * (1.0 - decoupled / gemm),
                fused_gain_pct: 100.0 * (fused / gemm - 1.0),
            }
        })
        .collect()
}
