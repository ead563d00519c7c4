//! Telemetry ingest: derived instantaneous power, alpha filtering, and
//! idle-region trimming.
//!
//! Raw logs record an energy accumulator (microjoules) per timestamp;
//! instantaneous power is the per-interval quotient `Δe/Δt` (µJ/µs = W),
//! smoothed with a two-tap exponential moving average and trimmed to the
//! span between the first and last busy interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default EMA coefficient for [`alpha_filter`].
pub const DEFAULT_ALPHA: f64 = 0.5;

/// One raw telemetry sample. `activity` is the busy-cycle count for the
/// sampling interval ending at this timestamp; `None` when the trace format
/// lacks the counter (trimming is then disabled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub timestamp_us: u64,
    pub energy_uj: f64,
    pub activity: Option<u64>,
}

/// Ordered energy-accumulator series with device context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSampleSeries {
    pub samples: Vec<RawSample>,
    pub device_tdp_w: f64,
}

impl RawSampleSeries {
    pub fn validate(&self) -> Result<()> {
        if self.device_tdp_w <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "device_tdp_w must be > 0, got {}",
                self.device_tdp_w
            )));
        }
        for (i, pair) in self.samples.windows(2).enumerate() {
            if pair[1].timestamp_us <= pair[0].timestamp_us {
                return Err(Error::InvalidRecord(format!(
                    "timestamps not strictly increasing at sample {}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Activity flags aligned with the derived power series (one per
    /// interval, taken from the interval's later endpoint). `None` when any
    /// sample lacks the counter.
    pub fn interval_activity(&self) -> Option<Vec<u64>> {
        self.samples[1..].iter().map(|s| s.activity).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub timestamp_us: u64,
    pub power_w: f64,
}

/// Analysis-ready power trace: filtered watts per timestamp, with the idle
/// head/tail removed when activity data was available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    pub samples: Vec<PowerSample>,
    pub device_tdp_w: f64,
    pub trimmed: bool,
}

impl PowerTrace {
    fn new(samples: Vec<PowerSample>, device_tdp_w: f64, trimmed: bool) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "a trace needs >= 2 active samples, got {}",
                samples.len()
            )));
        }
        if let Some(s) = samples.iter().find(|s| s.power_w < 0.0) {
            return Err(Error::InvalidRecord(format!(
                "negative power {} W at t={}",
                s.power_w, s.timestamp_us
            )));
        }
        Ok(PowerTrace {
            samples,
            device_tdp_w,
            trimmed,
        })
    }

    /// Filtered power of every sample relative to TDP.
    pub fn rel_tdp(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| s.power_w / self.device_tdp_w)
            .collect()
    }
}

/// Differentiate the energy accumulator into per-interval power.
///
/// Sample `i` of the output carries `(e[i+1] - e[i]) / (t[i+1] - t[i])`
/// assigned to the later endpoint `t[i+1]`. With `unwrap_counter` set, a
/// regression is treated as a 64-bit counter wrap and `2^64` µJ is added;
/// otherwise it is rejected as ingest corruption.
pub fn derive_power(raw: &RawSampleSeries, unwrap_counter: bool) -> Result<Vec<PowerSample>> {
    raw.validate()?;
    if raw.samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "derive_power needs >= 2 samples, got {}",
            raw.samples.len()
        )));
    }
    const WRAP: f64 = 18446744073709551616.0; // 2^64
    let mut offset = 0.0f64;
    let mut out = Vec::with_capacity(raw.samples.len() - 1);
    let mut prev = raw.samples[0].energy_uj;
    for (i, pair) in raw.samples.windows(2).enumerate() {
        let mut e1 = pair[1].energy_uj + offset;
        let e0 = prev;
        if e1 < e0 {
            if unwrap_counter {
                offset += WRAP;
                e1 += WRAP;
            } else {
                return Err(Error::CounterRegression { index: i + 1 });
            }
        }
        let dt = (pair[1].timestamp_us - pair[0].timestamp_us) as f64;
        out.push(PowerSample {
            timestamp_us: pair[1].timestamp_us,
            power_w: (e1 - e0) / dt,
        });
        prev = e1;
    }
    Ok(out)
}

/// Two-tap EMA over the raw derived power:
/// `out[0] = in[0]`, `out[i] = alpha*in[i] + (1-alpha)*in[i-1]`.
pub fn alpha_filter(power: &[PowerSample], alpha: f64) -> Result<Vec<PowerSample>> {
    if power.is_empty() {
        return Err(Error::InsufficientData(
            "alpha_filter on empty series".into(),
        ));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be in (0, 1], got {alpha}"
        )));
    }
    let mut out = Vec::with_capacity(power.len());
    out.push(power[0]);
    for pair in power.windows(2) {
        out.push(PowerSample {
            timestamp_us: pair[1].timestamp_us,
            power_w: alpha * pair[1].power_w + (1.0 - alpha) * pair[0].power_w,
        });
    }
    Ok(out)
}

/// Keep the contiguous span from the first to the last sample with
/// `activity > 0`; interior idle gaps are preserved.
///
/// `activity` must be index-aligned with `power`.
pub fn trim_idle(power: &[PowerSample], activity: &[u64], device_tdp_w: f64) -> Result<PowerTrace> {
    if power.len() != activity.len() {
        return Err(Error::InvalidParameter(format!(
            "activity length {} does not match power length {}",
            activity.len(),
            power.len()
        )));
    }
    let first = activity
        .iter()
        .position(|&a| a > 0)
        .ok_or(Error::NoActivity)?;
    let last = activity.iter().rposition(|&a| a > 0).unwrap();
    PowerTrace::new(power[first..=last].to_vec(), device_tdp_w, true)
}

/// Wrap a power series with no activity data; trimming is skipped.
pub fn untrimmed(power: Vec<PowerSample>, device_tdp_w: f64) -> Result<PowerTrace> {
    PowerTrace::new(power, device_tdp_w, false)
}

/// Ingest options for [`prepare`].
#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub alpha: f64,
    pub unwrap_counter: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            alpha: DEFAULT_ALPHA,
            unwrap_counter: false,
        }
    }
}

/// Full ingest path: derive, filter, then trim (filtering is applied before
/// trimming; it is shift-invariant over the kept span except at the boundary
/// sample).
pub fn prepare(raw: &RawSampleSeries, opts: IngestOptions) -> Result<PowerTrace> {
    let derived = derive_power(raw, opts.unwrap_counter)?;
    let filtered = alpha_filter(&derived, opts.alpha)?;
    match raw.interval_activity() {
        Some(activity) => trim_idle(&filtered, &activity, raw.device_tdp_w),
        None => untrimmed(filtered, raw.device_tdp_w),
    }
}

/// Same path for traces that ship pre-derived power instead of an energy
/// accumulator.
pub fn prepare_power(
    power: &[PowerSample],
    activity: Option<&[u64]>,
    device_tdp_w: f64,
    opts: IngestOptions,
) -> Result<PowerTrace> {
    let filtered = alpha_filter(power, opts.alpha)?;
    match activity {
        Some(a) => trim_idle(&filtered, a, device_tdp_w),
        None => untrimmed(filtered, device_tdp_w),
    }
}
