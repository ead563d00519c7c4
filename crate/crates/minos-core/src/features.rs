//! Feature extraction: spike detection and binning, power summaries,
//! empirical CDFs, and duration-weighted utilization aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::PowerTrace;

/// Detection threshold and histogram range, as fractions of TDP.
pub const SPIKE_LOWER: f64 = 0.5;
pub const SPIKE_UPPER: f64 = 2.0;

/// Default bin width for spike distribution vectors.
pub const DEFAULT_BIN_WIDTH: f64 = 0.1;

const EDGE_TOL: f64 = 1e-9;

/// Number of bins covering `[0.5, 2.0)` for bin width `c`. When `c` does not
/// divide the range, the ladder ends with a short final bin capped at 2.0.
pub fn bin_count(bin_width: f64) -> Result<usize> {
    if !(bin_width > 0.0 && bin_width <= SPIKE_UPPER - SPIKE_LOWER) {
        return Err(Error::InvalidParameter(format!(
            "bin width must be in (0, 1.5], got {bin_width}"
        )));
    }
    let span = SPIKE_UPPER - SPIKE_LOWER;
    let full = (span / bin_width + EDGE_TOL).floor() as usize;
    if (full as f64 * bin_width - span).abs() <= EDGE_TOL {
        Ok(full)
    } else {
        Ok(full + 1)
    }
}

/// Bin index for a relative magnitude `r >= 0.5`. Magnitudes at or beyond
/// 2.0 are clamped into the top bin; the caller tracks a clamp counter.
fn bin_index(r: f64, bin_width: f64, bins: usize) -> usize {
    let j = ((r - SPIKE_LOWER) / bin_width).floor() as usize;
    j.min(bins - 1)
}

/// Normalized histogram of spike magnitudes relative to TDP over
/// `[0.5, 2.0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeVector {
    pub bin_width: f64,
    pub values: Vec<f64>,
    pub total_spikes: u64,
    /// Samples at or beyond 2.0 x TDP folded into the top bin.
    pub clamped: u64,
    pub device_tdp_w: f64,
}

impl SpikeVector {
    pub fn is_zero(&self) -> bool {
        self.total_spikes == 0
    }

    /// Lower edge of bin `j`.
    pub fn bin_lower(&self, j: usize) -> f64 {
        SPIKE_LOWER + j as f64 * self.bin_width
    }
}

/// Relative magnitudes `P_filt / TDP` for exactly the samples at or above
/// the 0.5 x TDP threshold, in time order. An empty result is valid.
pub fn detect_spikes(trace: &PowerTrace) -> Vec<f64> {
    trace
        .samples
        .iter()
        .map(|s| s.power_w / trace.device_tdp_w)
        .filter(|&r| r >= SPIKE_LOWER)
        .collect()
}

/// Bin spike magnitudes into a normalized distribution vector.
pub fn build_spike_vector(
    magnitudes: &[f64],
    bin_width: f64,
    device_tdp_w: f64,
) -> Result<SpikeVector> {
    let bins = bin_count(bin_width)?;
    let mut counts = vec![0u64; bins];
    let mut clamped = 0u64;
    for &r in magnitudes {
        if r < SPIKE_LOWER {
            return Err(Error::InvalidRecord(format!(
                "magnitude {r} below the 0.5 x TDP detection threshold"
            )));
        }
        if r >= SPIKE_UPPER {
            clamped += 1;
        }
        counts[bin_index(r, bin_width, bins)] += 1;
    }
    let total = magnitudes.len() as u64;
    let values = if total == 0 {
        vec![0.0; bins]
    } else {
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    };
    Ok(SpikeVector {
        bin_width,
        values,
        total_spikes: total,
        clamped,
        device_tdp_w,
    })
}

/// Mean, nearest-rank percentiles, and max of power relative to TDP,
/// computed over all samples of the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSummary {
    pub mean_rel_tdp: f64,
    pub p90_rel_tdp: f64,
    pub p95_rel_tdp: f64,
    pub p99_rel_tdp: f64,
    pub max_rel_tdp: f64,
}

impl PowerSummary {
    /// Summary from relative-to-TDP samples.
    pub fn from_rel_samples(rel: &[f64]) -> Result<PowerSummary> {
        if rel.is_empty() {
            return Err(Error::InsufficientData("summary of empty trace".into()));
        }
        let mut sorted = rel.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(PowerSummary {
            mean_rel_tdp: rel.iter().sum::<f64>() / rel.len() as f64,
            p90_rel_tdp: nearest_rank(&sorted, 0.90),
            p95_rel_tdp: nearest_rank(&sorted, 0.95),
            p99_rel_tdp: nearest_rank(&sorted, 0.99),
            max_rel_tdp: *sorted.last().unwrap(),
        })
    }
}

/// Nearest-rank percentile over a pre-sorted slice: the `ceil(q*N)`-th order
/// statistic.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

pub fn summarize_power(trace: &PowerTrace) -> Result<PowerSummary> {
    PowerSummary::from_rel_samples(&trace.rel_tdp())
}

/// Per-kernel counter record: runtime plus percent-of-peak throughput
/// utilizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRecord {
    pub name: String,
    pub duration_ns: f64,
    pub sm_util_pct: f64,
    pub dram_util_pct: f64,
}

impl KernelRecord {
    pub fn validate(&self) -> Result<()> {
        if self.duration_ns <= 0.0 {
            return Err(Error::InvalidRecord(format!(
                "kernel {} has non-positive duration {}",
                self.name, self.duration_ns
            )));
        }
        for (label, v) in [
            ("sm_util", self.sm_util_pct),
            ("dram_util", self.dram_util_pct),
        ] {
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::InvalidRecord(format!(
                    "kernel {} has {label} {v} outside [0, 100]",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Application-level utilization point: duration-weighted means of the
/// per-kernel counters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilizationPoint {
    pub app_sm_util: f64,
    pub app_dram_util: f64,
}

impl UtilizationPoint {
    pub fn euclidean_distance(&self, other: &UtilizationPoint) -> f64 {
        let dx = self.app_sm_util - other.app_sm_util;
        let dy = self.app_dram_util - other.app_dram_util;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Duration-weighted mean of per-kernel utilizations; longer-running kernels
/// contribute proportionally more.
pub fn aggregate_utilization(kernels: &[KernelRecord]) -> Result<UtilizationPoint> {
    if kernels.is_empty() {
        return Err(Error::InsufficientData("no kernel records".into()));
    }
    let mut total = 0.0;
    let mut sm = 0.0;
    let mut dram = 0.0;
    for k in kernels {
        k.validate()?;
        total += k.duration_ns;
        sm += k.duration_ns * k.sm_util_pct;
        dram += k.duration_ns * k.dram_util_pct;
    }
    Ok(UtilizationPoint {
        app_sm_util: sm / total,
        app_dram_util: dram / total,
    })
}

/// Empirical CDF: ordered `(value, cumulative_fraction)` pairs, one per
/// distinct value, monotone in both coordinates.
pub fn cdf_points(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::InsufficientData("cdf of empty input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => out.push((v, frac)),
        }
    }
    Ok(out)
}
