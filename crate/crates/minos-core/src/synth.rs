//! Synthetic workload generation: power traces whose featurization
//! reproduces a requested spike-bin occupancy, and parameterized
//! frequency-scaling profiles. Used for controlled end-to-end tests and
//! demos without hardware counters.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{bin_count, detect_spikes, SPIKE_LOWER};
use crate::refset::{ScalingEntry, ScalingProfile};
use crate::trace::{prepare, IngestOptions, RawSample, RawSampleSeries};

/// Sampling period of generated traces.
pub const SYNTH_PERIOD_US: u64 = 1000;

/// Idle power level of generated traces, relative to TDP.
pub const SYNTH_IDLE_REL: f64 = 0.1;

/// Frequency grid used by [`synth_profile`].
pub const SYNTH_FREQ_GRID: [u32; 5] = [1300, 1500, 1700, 1900, 2100];

/// Request for a synthetic trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub device_tdp_w: f64,
    pub bin_width: f64,
    /// Requested spike-bin occupancy; length must equal the bin count for
    /// `bin_width` and the entries must sum to 1.
    pub occupancies: Vec<f64>,
    /// Number of spike samples the featurized trace should contain.
    pub sample_count: usize,
    /// Idle sampling intervals prepended before the first active interval.
    pub idle_head: usize,
    /// Idle sampling intervals appended after the last active interval.
    pub idle_tail: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.device_tdp_w <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "device_tdp_w must be > 0, got {}",
                self.device_tdp_w
            )));
        }
        let bins = bin_count(self.bin_width)?;
        if self.occupancies.len() != bins {
            return Err(Error::InvalidSpec(format!(
                "expected {bins} occupancies for bin width {}, got {}",
                self.bin_width,
                self.occupancies.len()
            )));
        }
        if self.occupancies.iter().any(|&o| !(0.0..=1.0).contains(&o)) {
            return Err(Error::InvalidSpec("occupancies must lie in [0, 1]".into()));
        }
        let sum: f64 = self.occupancies.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "occupancies must sum to 1, got {sum}"
            )));
        }
        if self.sample_count < 2 {
            return Err(Error::InvalidSpec(format!(
                "sample_count must be >= 2, got {}",
                self.sample_count
            )));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` counts across fractional
/// shares. Remainder ties go to the lower index.
pub fn apportion_counts(shares: &[f64], total: usize) -> Vec<u64> {
    let floors: Vec<u64> = shares
        .iter()
        .map(|&s| (s * total as f64).floor() as u64)
        .collect();
    let assigned: u64 = floors.iter().sum();
    let mut remainder: Vec<(usize, f64)> = shares
        .iter()
        .enumerate()
        .map(|(i, &s)| (i, s * total as f64 - floors[i] as f64))
        .collect();
    remainder.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut counts = floors;
    for &(i, _) in remainder.iter().take(total - assigned as usize) {
        counts[i] += 1;
    }
    counts
}

/// Per-sample power level for the `i`-th sample of the run occupying bin
/// `bin`. The base sits at 30% of the bin width above the lower edge with up
/// to 15% of jitter, so any two-sample average within a run stays in the
/// bin, and the first sample of a run does not depend on the run length.
fn run_level_rel(spec: &SynthSpec, bin: usize, i: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(
        spec.seed
            ^ (bin as u64).wrapping_mul(0x9e3779b97f4a7c15)
            ^ i.wrapping_mul(0xd1b54a32d192ed03),
    );
    let lower = SPIKE_LOWER + bin as f64 * spec.bin_width;
    lower + spec.bin_width * (0.3 + 0.15 * rng.gen_range(0.0..1.0))
}

/// Assemble raw samples from per-bin run lengths: an optional idle head,
/// one run per occupied bin in ascending bin order, then an optional idle
/// tail. Energy accumulates at the interval power; activity annotates the
/// interval ending at each sample.
fn build_raw(spec: &SynthSpec, run_lens: &[u64]) -> RawSampleSeries {
    let mut interval_rel = Vec::new();
    let mut interval_act = Vec::new();
    for _ in 0..spec.idle_head {
        interval_rel.push(SYNTH_IDLE_REL);
        interval_act.push(0u64);
    }
    for (bin, &len) in run_lens.iter().enumerate() {
        for i in 0..len {
            interval_rel.push(run_level_rel(spec, bin, i));
            interval_act.push(1000);
        }
    }
    for _ in 0..spec.idle_tail {
        interval_rel.push(SYNTH_IDLE_REL);
        interval_act.push(0);
    }

    let mut samples = Vec::with_capacity(interval_rel.len() + 1);
    samples.push(RawSample {
        timestamp_us: 0,
        energy_uj: 0.0,
        activity: Some(0),
    });
    let mut energy = 0.0;
    for (i, (&rel, &act)) in interval_rel.iter().zip(&interval_act).enumerate() {
        energy += rel * spec.device_tdp_w * SYNTH_PERIOD_US as f64;
        samples.push(RawSample {
            timestamp_us: (i as u64 + 1) * SYNTH_PERIOD_US,
            energy_uj: energy,
            activity: Some(act),
        });
    }
    RawSampleSeries {
        samples,
        device_tdp_w: spec.device_tdp_w,
    }
}

fn achieved_counts(spec: &SynthSpec, raw: &RawSampleSeries) -> Result<Vec<u64>> {
    let trace = prepare(raw, IngestOptions::default())?;
    let bins = bin_count(spec.bin_width)?;
    let mut counts = vec![0u64; bins];
    for r in detect_spikes(&trace) {
        let j = (((r - SPIKE_LOWER) / spec.bin_width).floor() as usize).min(bins - 1);
        counts[j] += 1;
    }
    Ok(counts)
}

/// Generate a raw trace whose filtered, trimmed featurization reproduces the
/// requested occupancies.
///
/// The two-tap filter necessarily produces one blended sample at each run
/// boundary, so runs are laid out in ascending bin order (boundary blends
/// then land in an adjacent occupied bin) and run lengths are corrected
/// against the actually-achieved histogram until it matches the request.
/// With non-contiguous occupied bins or a hot idle boundary a residual of at
/// most one sample per bin can remain.
pub fn synth_trace(spec: &SynthSpec) -> Result<RawSampleSeries> {
    spec.validate()?;
    let target = apportion_counts(&spec.occupancies, spec.sample_count);
    let mut lens = target.clone();
    let mut raw = build_raw(spec, &lens);
    for _ in 0..16 {
        let achieved = achieved_counts(spec, &raw)?;
        if achieved == target {
            break;
        }
        let mut next = lens.clone();
        let mut changed = false;
        for j in 0..lens.len() {
            if target[j] == 0 {
                continue; // strays in unrequested bins cannot be compensated
            }
            let want = lens[j] as i64 + target[j] as i64 - achieved[j] as i64;
            let want = want.max(0) as u64;
            if want != next[j] {
                next[j] = want;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        lens = next;
        raw = build_raw(spec, &lens);
    }
    Ok(raw)
}

/// Synthetic frequency-scaling profile over [`SYNTH_FREQ_GRID`].
///
/// The p90 ladder steps by 0.1 x TDP per grid point and is positioned so
/// that `crossing_freq_mhz` is the highest frequency strictly below a 1.3 x
/// TDP bound. Degradation grows linearly below the uncapped frequency at
/// `deg_slope_pct` percent per 100 MHz. Profiling times scale with
/// degradation so savings accounting has realistic inputs.
pub fn synth_profile(
    workload: &str,
    crossing_freq_mhz: u32,
    deg_slope_pct: f64,
) -> Result<ScalingProfile> {
    let cross_rank = SYNTH_FREQ_GRID
        .iter()
        .position(|&f| f == crossing_freq_mhz)
        .ok_or_else(|| {
            Error::InvalidSpec(format!(
                "crossing frequency {crossing_freq_mhz} MHz is not on the synthetic grid"
            ))
        })?;
    if deg_slope_pct < 0.0 {
        return Err(Error::InvalidSpec(format!(
            "degradation slope must be >= 0, got {deg_slope_pct}"
        )));
    }
    let f_max = *SYNTH_FREQ_GRID.last().unwrap();
    let uncapped_runtime_s = 100.0;
    let entries: Vec<ScalingEntry> = SYNTH_FREQ_GRID
        .iter()
        .enumerate()
        .map(|(rank, &f)| {
            let p90 = 1.3 + 0.1 * (rank as f64 - cross_rank as f64) - 0.05;
            let deg = deg_slope_pct * (f_max - f) as f64 / 100.0;
            ScalingEntry {
                freq_cap_mhz: f,
                p90_rel_tdp: p90,
                p95_rel_tdp: p90 + 0.02,
                p99_rel_tdp: p90 + 0.04,
                perf_degradation_pct: deg,
            }
        })
        .collect();
    let profiling_times_s: BTreeMap<u32, f64> = entries
        .iter()
        .map(|e| {
            (
                e.freq_cap_mhz,
                uncapped_runtime_s * (1.0 + e.perf_degradation_pct / 100.0),
            )
        })
        .collect();
    let profile = ScalingProfile {
        workload: workload.to_string(),
        entries,
        uncapped_freq_mhz: f_max,
        uncapped_runtime_s,
        profiling_times_s: Some(profiling_times_s),
    };
    profile.validate()?;
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::build_spike_vector;
    use crate::refset::PercentileChoice;

    fn occupancy_of(spec: &SynthSpec, raw: &RawSampleSeries) -> (Vec<f64>, u64) {
        let trace = prepare(raw, IngestOptions::default()).unwrap();
        let mags = detect_spikes(&trace);
        let sv = build_spike_vector(&mags, spec.bin_width, spec.device_tdp_w).unwrap();
        (sv.values, sv.total_spikes)
    }

    #[test]
    fn apportion_conserves_total_and_respects_shares() {
        let counts = apportion_counts(&[0.5, 0.3, 0.2], 10);
        assert_eq!(counts, vec![5, 3, 2]);
        let counts = apportion_counts(&[1.0 / 3.0; 3], 10);
        assert_eq!(counts.iter().sum::<u64>(), 10);
        for &c in &counts {
            assert!(c == 3 || c == 4);
        }
    }

    #[test]
    fn one_hot_spec_is_exact() {
        // A single occupied bin with no idle head: constant level, the
        // filter is the identity on it, occupancy reproduced exactly.
        let mut occ = vec![0.0; 15];
        occ[6] = 1.0;
        let spec = SynthSpec {
            device_tdp_w: 700.0,
            bin_width: 0.1,
            occupancies: occ.clone(),
            sample_count: 200,
            idle_head: 0,
            idle_tail: 0,
            seed: 7,
        };
        let raw = synth_trace(&spec).unwrap();
        let (values, total) = occupancy_of(&spec, &raw);
        assert_eq!(total, 200);
        assert_eq!(values, occ);
    }

    #[test]
    fn idle_head_is_trimmed() {
        let mut occ = vec![0.0; 15];
        occ[2] = 1.0;
        let spec = SynthSpec {
            device_tdp_w: 700.0,
            bin_width: 0.1,
            occupancies: occ,
            sample_count: 100,
            idle_head: 50,
            idle_tail: 50,
            seed: 1,
        };
        let raw = synth_trace(&spec).unwrap();
        let trace = prepare(&raw, IngestOptions::default()).unwrap();
        assert!(trace.trimmed);
        // Nothing near the idle level survives trimming.
        assert!(trace
            .samples
            .iter()
            .all(|s| s.power_w / spec.device_tdp_w > 0.3));
        let (_, total) = occupancy_of(&spec, &raw);
        assert!((total as i64 - 100).unsigned_abs() <= 1);
    }

    #[test]
    fn contiguous_spans_reproduce_occupancies_within_one_sample() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..20 {
            let bin_width = [0.1, 0.15, 0.25][case % 3];
            let bins = bin_count(bin_width).unwrap();
            let span = rng.gen_range(2..=bins.min(6));
            let start = rng.gen_range(0..=bins - span);
            let n = rng.gen_range(200..800usize);
            // Exact-count shares over a contiguous occupied span.
            let mut counts = vec![0u64; bins];
            let mut left = n as u64;
            for (i, slot) in counts[start..start + span].iter_mut().enumerate() {
                let c = if i + 1 == span {
                    left
                } else {
                    rng.gen_range(1..=left - (span - i - 1) as u64)
                };
                *slot = c;
                left -= c;
            }
            let occ: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
            let spec = SynthSpec {
                device_tdp_w: 700.0,
                bin_width,
                occupancies: occ.clone(),
                sample_count: n,
                idle_head: if case % 2 == 0 { 0 } else { 20 },
                idle_tail: 10,
                seed: 1000 + case as u64,
            };
            let raw = synth_trace(&spec).unwrap();
            let (values, total) = occupancy_of(&spec, &raw);
            let tol = 1.0 / n as f64 + 1e-12;
            for (j, (&got, &want)) in values.iter().zip(&occ).enumerate() {
                let got_abs = got * total as f64;
                let want_abs = want * n as f64;
                assert!(
                    (got_abs - want_abs).abs() <= 1.0 + 1e-6,
                    "case {case} bin {j}: got {got_abs} want {want_abs}"
                );
                assert!(
                    (got - want).abs() <= tol || (got_abs - want_abs).abs() <= 1.0 + 1e-6,
                    "case {case} bin {j}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn spec_validation() {
        let spec = SynthSpec {
            device_tdp_w: 700.0,
            bin_width: 0.1,
            occupancies: vec![0.5; 2], // wrong length
            sample_count: 10,
            idle_head: 0,
            idle_tail: 0,
            seed: 0,
        };
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
        let spec = SynthSpec {
            occupancies: {
                let mut o = vec![0.0; 15];
                o[0] = 0.9; // sums to 0.9
                o
            },
            ..spec
        };
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn profile_crossing_places_the_power_cap() {
        use crate::predict::cap_power_centric;
        for &crossing in &SYNTH_FREQ_GRID {
            let p = synth_profile("w/x", crossing, 2.0).unwrap();
            assert_eq!(
                cap_power_centric(&p, 1.3, PercentileChoice::P90).unwrap(),
                crossing,
                "crossing {crossing}"
            );
        }
    }

    #[test]
    fn profile_shape() {
        let p = synth_profile("w/x", 1500, 3.0).unwrap();
        let e1900 = p.entry_at(1900).unwrap();
        assert!((e1900.perf_degradation_pct - 6.0).abs() < 1e-12);
        assert_eq!(p.entry_at(2100).unwrap().perf_degradation_pct, 0.0);
        let e1500 = p.entry_at(1500).unwrap();
        assert!((e1500.p90_rel_tdp - 1.25).abs() < 1e-12);
        assert!((p.entry_at(1700).unwrap().p90_rel_tdp - 1.35).abs() < 1e-12);
        assert!((e1500.p95_rel_tdp - 1.27).abs() < 1e-12);
        assert!(matches!(
            synth_profile("w/x", 1400, 1.0),
            Err(Error::InvalidSpec(_))
        ));
    }
}
