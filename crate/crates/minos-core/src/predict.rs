//! Frequency-cap selection: bin-size search, neighbor lookup, power- and
//! performance-centric cap scans, the mean-power baseline, hold-one-out
//! evaluation, and profiling-savings accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::{nearest_power_neighbor, nearest_util_neighbor, NeighborResult};
use crate::error::{Error, Result};
use crate::features::{build_spike_vector, PowerSummary, UtilizationPoint};
use crate::refset::{PercentileChoice, ReferenceSet, ScalingProfile};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Default candidate bin widths for the bin-size search.
pub const DEFAULT_BIN_CANDIDATES: [f64; 7] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.5];

/// Default power bound as a multiple of TDP.
pub const DEFAULT_POWER_BOUND: f64 = 1.3;

/// Default performance-degradation bound in percent.
pub const DEFAULT_PERF_BOUND_PCT: f64 = 5.0;

/// Default minimum-frequency floor for perf-centric caps, as a fraction of
/// the uncapped frequency.
pub const DEFAULT_MIN_FREQ_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    PowerCentric,
    PerfCentric,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" | "power_centric" => Ok(Objective::PowerCentric),
            "perf" | "perf_centric" => Ok(Objective::PerfCentric),
            other => Err(Error::InvalidParameter(format!(
                "objective must be power or perf, got {other}"
            ))),
        }
    }
}

/// Tuning knobs for [`select_optimal_freq`] and [`holdout_evaluate`].
#[derive(Debug, Clone)]
pub struct PredictConfig {
    pub objective: Objective,
    pub power_bound_multiple: f64,
    pub perf_bound_pct: f64,
    pub percentile: PercentileChoice,
    /// Explicit perf-centric floor; when `None`, 0.6 x the neighbor's
    /// uncapped frequency is used.
    pub min_freq_mhz: Option<u32>,
    /// Fixed bin width; when `None`, the candidate search picks one.
    pub bin_width: Option<f64>,
    pub bin_candidates: Vec<f64>,
}

impl PredictConfig {
    pub fn new(objective: Objective) -> Self {
        PredictConfig {
            objective,
            power_bound_multiple: DEFAULT_POWER_BOUND,
            perf_bound_pct: DEFAULT_PERF_BOUND_PCT,
            percentile: PercentileChoice::P90,
            min_freq_mhz: None,
            bin_width: None,
            bin_candidates: DEFAULT_BIN_CANDIDATES.to_vec(),
        }
    }
}

/// Everything the predictor needs to know about a new workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetFeatures {
    pub workload: String,
    pub magnitudes_rel_tdp: Vec<f64>,
    pub summary: PowerSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilization: Option<UtilizationPoint>,
}

/// A selected frequency cap with every intermediate recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapRecommendation {
    pub workload: String,
    pub objective: Objective,
    pub chosen_freq_mhz: u32,
    pub neighbor: NeighborResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    /// Bound as given: a TDP multiple for power, percent for perf.
    pub bound: f64,
    /// The neighbor's value at the chosen cap: percentile power (rel TDP)
    /// or degradation percent.
    pub predicted_value: f64,
    /// Power-centric only: no grid frequency satisfied the bound and the
    /// grid minimum was returned instead.
    pub infeasible: bool,
    /// The target had no spikes, so the utilization neighbor was used.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_spike_fallback: bool,
}

/// Bin-size search: for each candidate c, find the target's cosine neighbor
/// at that width and score `|p90(target) - p90(neighbor)|` over uncapped
/// power. Returns the arg-min c, ties toward smaller c.
pub fn choose_bin_size(
    target: &TargetFeatures,
    refs: &ReferenceSet,
    candidates: &[f64],
) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter(
            "empty bin-size candidate set".into(),
        ));
    }
    if refs.workloads.is_empty() {
        return Err(Error::InsufficientData("empty reference set".into()));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best: Option<(f64, f64)> = None;
    for &c in &sorted {
        let vectors = refs.materialize_vectors(c)?;
        let query = build_spike_vector(&target.magnitudes_rel_tdp, c, refs.device_tdp_w)?;
        let neighbor = nearest_power_neighbor(&query, &vectors)?;
        let err =
            (target.summary.p90_rel_tdp - refs.workloads[&neighbor.id].summary.p90_rel_tdp).abs();
        if best.is_none_or(|(_, e)| err < e) {
            best = Some((c, err));
        }
    }
    Ok(best.unwrap().0)
}

/// Highest frequency on the grid whose selected-percentile power is
/// strictly below `bound x TDP`, scanning in decreasing order.
pub fn cap_power_centric(
    profile: &ScalingProfile,
    bound_multiple: f64,
    percentile: PercentileChoice,
) -> Result<u32> {
    if bound_multiple <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "power bound must be > 0, got {bound_multiple}"
        )));
    }
    profile
        .entries
        .iter()
        .rev()
        .find(|e| percentile.of(e) < bound_multiple)
        .map(|e| e.freq_cap_mhz)
        .ok_or(Error::NoFeasibleCap)
}

/// Lowest frequency at or above the floor whose degradation is within the
/// bound, scanning in increasing order.
pub fn cap_perf_centric(
    profile: &ScalingProfile,
    bound_pct: f64,
    min_freq_mhz: Option<u32>,
) -> Result<u32> {
    if bound_pct < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "perf bound must be >= 0, got {bound_pct}"
        )));
    }
    let floor = min_freq_mhz.unwrap_or(0);
    profile
        .entries
        .iter()
        .filter(|e| e.freq_cap_mhz >= floor)
        .find(|e| e.perf_degradation_pct <= bound_pct)
        .map(|e| e.freq_cap_mhz)
        .ok_or(Error::NoFeasibleCap)
}

/// Relative power prediction error in percent, clamped at 0 when the
/// observed percentile is at or below the bound.
pub fn prediction_error_power(observed_rel_tdp: f64, bound_multiple: f64) -> f64 {
    ((observed_rel_tdp - bound_multiple) / bound_multiple * 100.0).max(0.0)
}

/// Perf prediction error in percent: excess degradation over the bound,
/// clamped at 0.
pub fn prediction_error_perf(observed_degradation_pct: f64, bound_pct: f64) -> f64 {
    (observed_degradation_pct - bound_pct).max(0.0)
}

/// Nearest reference by absolute mean-power difference, for the mean-power
/// baseline comparison. Ties break lexicographically.
pub fn baseline_mean_power_neighbor(
    summary: &PowerSummary,
    refs: &ReferenceSet,
) -> Result<NeighborResult> {
    if refs.workloads.is_empty() {
        return Err(Error::InsufficientData("empty reference set".into()));
    }
    let mut best: Option<NeighborResult> = None;
    for (id, rec) in &refs.workloads {
        let d = (summary.mean_rel_tdp - rec.summary.mean_rel_tdp).abs();
        if best.as_ref().is_none_or(|b| d < b.distance) {
            best = Some(NeighborResult {
                id: id.clone(),
                distance: d,
            });
        }
    }
    Ok(best.unwrap())
}

fn perf_floor(cfg: &PredictConfig, profile: &ScalingProfile) -> u32 {
    cfg.min_freq_mhz.unwrap_or_else(|| {
        (profile.uncapped_freq_mhz as f64 * DEFAULT_MIN_FREQ_FRACTION).round() as u32
    })
}

/// Algorithm main path: bin-size search, neighbor lookup, then the cap scan
/// for the requested objective. Zero-spike targets under the power
/// objective fall back to the utilization neighbor.
pub fn select_optimal_freq(
    target: &TargetFeatures,
    refs: &ReferenceSet,
    cfg: &PredictConfig,
) -> Result<CapRecommendation> {
    if refs.workloads.is_empty() {
        return Err(Error::InsufficientData("empty reference set".into()));
    }
    match cfg.objective {
        Objective::PowerCentric => {
            if target.magnitudes_rel_tdp.is_empty() {
                // No spikes: cosine distance is undefined; route through the
                // utilization neighbor instead.
                let util = target.utilization.ok_or_else(|| {
                    Error::InsufficientData(format!(
                        "{} has no spikes and no utilization data for the fallback",
                        target.workload
                    ))
                })?;
                let neighbor = nearest_util_neighbor(&util, &refs.utilization_points())?;
                let profile = &refs.workloads[&neighbor.id].profile;
                let (freq, infeasible) =
                    match cap_power_centric(profile, cfg.power_bound_multiple, cfg.percentile) {
                        Ok(f) => (f, false),
                        Err(Error::NoFeasibleCap) => (profile.min_freq_mhz(), true),
                        Err(e) => return Err(e),
                    };
                let predicted = cfg.percentile.of(profile.entry_at(freq).unwrap());
                return Ok(CapRecommendation {
                    workload: target.workload.clone(),
                    objective: cfg.objective,
                    chosen_freq_mhz: freq,
                    neighbor,
                    bin_width: None,
                    bound: cfg.power_bound_multiple,
                    predicted_value: predicted,
                    infeasible,
                    no_spike_fallback: true,
                });
            }
            let c = match cfg.bin_width {
                Some(c) => c,
                None => choose_bin_size(target, refs, &cfg.bin_candidates)?,
            };
            let vectors = refs.materialize_vectors(c)?;
            let query = build_spike_vector(&target.magnitudes_rel_tdp, c, refs.device_tdp_w)?;
            let neighbor = nearest_power_neighbor(&query, &vectors)?;
            let profile = &refs.workloads[&neighbor.id].profile;
            // A sysadmin still needs a setting when nothing satisfies the
            // bound: return the grid minimum flagged infeasible.
            let (freq, infeasible) =
                match cap_power_centric(profile, cfg.power_bound_multiple, cfg.percentile) {
                    Ok(f) => (f, false),
                    Err(Error::NoFeasibleCap) => (profile.min_freq_mhz(), true),
                    Err(e) => return Err(e),
                };
            let predicted = cfg.percentile.of(profile.entry_at(freq).unwrap());
            Ok(CapRecommendation {
                workload: target.workload.clone(),
                objective: cfg.objective,
                chosen_freq_mhz: freq,
                neighbor,
                bin_width: Some(c),
                bound: cfg.power_bound_multiple,
                predicted_value: predicted,
                infeasible,
                no_spike_fallback: false,
            })
        }
        Objective::PerfCentric => {
            let util = target.utilization.ok_or_else(|| {
                Error::InsufficientData(format!(
                    "{} has no utilization data for the perf objective",
                    target.workload
                ))
            })?;
            let neighbor = nearest_util_neighbor(&util, &refs.utilization_points())?;
            let profile = &refs.workloads[&neighbor.id].profile;
            // Violating an SLO bound silently is unacceptable: NoFeasibleCap
            // propagates for the perf objective.
            let freq =
                cap_perf_centric(profile, cfg.perf_bound_pct, Some(perf_floor(cfg, profile)))?;
            let predicted = profile.entry_at(freq).unwrap().perf_degradation_pct;
            Ok(CapRecommendation {
                workload: target.workload.clone(),
                objective: cfg.objective,
                chosen_freq_mhz: freq,
                neighbor,
                bin_width: None,
                bound: cfg.perf_bound_pct,
                predicted_value: predicted,
                infeasible: false,
                no_spike_fallback: false,
            })
        }
    }
}

/// Profiling-time savings of single-frequency profiling plus neighbor
/// transfer, versus sweeping the whole grid: `(1 - T_f0 / sum T_f) * 100`.
pub fn profiling_savings(times_s: &BTreeMap<u32, f64>, base_freq_mhz: u32) -> Result<f64> {
    let base = *times_s.get(&base_freq_mhz).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "no profiling time recorded for {base_freq_mhz} MHz"
        ))
    })?;
    if let Some((f, t)) = times_s.iter().find(|(_, &t)| t <= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "non-positive profiling time {t} at {f} MHz"
        )));
    }
    let total: f64 = times_s.values().sum();
    Ok((1.0 - base / total) * 100.0)
}

/// One hold-one-out row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadEval {
    pub workload: String,
    pub neighbor: NeighborResult,
    pub chosen_freq_mhz: u32,
    /// The neighbor's value at the chosen cap.
    pub predicted: f64,
    /// The held-out workload's own value at the chosen cap.
    pub observed: f64,
    pub error_pct: f64,
    pub baseline_neighbor: NeighborResult,
    pub baseline_freq_mhz: u32,
    pub baseline_error_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_error_pct: f64,
}

/// Hold-one-out evaluation report with the mean-power baseline column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub objective: Objective,
    pub per_workload: Vec<WorkloadEval>,
    pub mean_abs_error_pct: f64,
    pub baseline_mean_abs_error_pct: f64,
    pub histogram: Vec<HistogramBin>,
}

/// Default neighbor-distance histogram edges (cosine or Euclidean,
/// depending on objective).
pub fn default_distance_bins(objective: Objective) -> Vec<f64> {
    match objective {
        Objective::PowerCentric => vec![0.0, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
        Objective::PerfCentric => vec![0.0, 5.0, 10.0, 20.0, 40.0, 80.0, 150.0],
    }
}

/// The held-out workload's own value at the chosen cap, interpolating
/// linearly when the cap is not on its grid.
fn observed_value(
    profile: &ScalingProfile,
    freq: u32,
    percentile: PercentileChoice,
    perf: bool,
) -> f64 {
    let pick = |e: &crate::refset::ScalingEntry| {
        if perf {
            e.perf_degradation_pct
        } else {
            percentile.of(e)
        }
    };
    if let Some(e) = profile.entry_at(freq) {
        return pick(e);
    }
    let entries = &profile.entries;
    if freq <= entries[0].freq_cap_mhz {
        return pick(&entries[0]);
    }
    if freq >= entries.last().unwrap().freq_cap_mhz {
        return pick(entries.last().unwrap());
    }
    let hi = entries.iter().position(|e| e.freq_cap_mhz > freq).unwrap();
    let (a, b) = (&entries[hi - 1], &entries[hi]);
    let t = (freq - a.freq_cap_mhz) as f64 / (b.freq_cap_mhz - a.freq_cap_mhz) as f64;
    pick(a) + t * (pick(b) - pick(a))
}

fn evaluate_one(id: &str, refs: &ReferenceSet, cfg: &PredictConfig) -> Result<WorkloadEval> {
    let rec = &refs.workloads[id];
    let target = TargetFeatures {
        workload: id.to_string(),
        magnitudes_rel_tdp: rec.magnitudes_rel_tdp.clone(),
        summary: rec.summary.clone(),
        utilization: rec.utilization,
    };
    let rest = refs.without(id);
    let reco = select_optimal_freq(&target, &rest, cfg)?;
    let perf = cfg.objective == Objective::PerfCentric;
    let observed = observed_value(&rec.profile, reco.chosen_freq_mhz, cfg.percentile, perf);
    let error_pct = if perf {
        prediction_error_perf(observed, cfg.perf_bound_pct)
    } else {
        prediction_error_power(observed, cfg.power_bound_multiple)
    };

    // Baseline: same cap-selection machinery, neighbor chosen by mean power.
    let baseline_neighbor = baseline_mean_power_neighbor(&rec.summary, &rest)?;
    let bprofile = &rest.workloads[&baseline_neighbor.id].profile;
    let baseline_freq = if perf {
        cap_perf_centric(
            bprofile,
            cfg.perf_bound_pct,
            Some(perf_floor(cfg, bprofile)),
        )?
    } else {
        match cap_power_centric(bprofile, cfg.power_bound_multiple, cfg.percentile) {
            Ok(f) => f,
            Err(Error::NoFeasibleCap) => bprofile.min_freq_mhz(),
            Err(e) => return Err(e),
        }
    };
    let baseline_observed = observed_value(&rec.profile, baseline_freq, cfg.percentile, perf);
    let baseline_error_pct = if perf {
        prediction_error_perf(baseline_observed, cfg.perf_bound_pct)
    } else {
        prediction_error_power(baseline_observed, cfg.power_bound_multiple)
    };

    Ok(WorkloadEval {
        workload: id.to_string(),
        neighbor: reco.neighbor,
        chosen_freq_mhz: reco.chosen_freq_mhz,
        predicted: reco.predicted_value,
        observed,
        error_pct,
        baseline_neighbor,
        baseline_freq_mhz: baseline_freq,
        baseline_error_pct,
    })
}

/// Exclude each workload in turn, predict it from the remainder, and score
/// the prediction against its own scaling profile.
pub fn holdout_evaluate(
    refs: &ReferenceSet,
    cfg: &PredictConfig,
    distance_bins: &[f64],
) -> Result<EvaluationReport> {
    if refs.workloads.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "hold-one-out needs >= 2 workloads, got {}",
            refs.workloads.len()
        )));
    }
    let ids: Vec<&String> = refs.workloads.keys().collect();
    #[cfg(feature = "parallel")]
    let per_workload: Vec<WorkloadEval> = ids
        .par_iter()
        .map(|id| evaluate_one(id, refs, cfg))
        .collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let per_workload: Vec<WorkloadEval> = ids
        .iter()
        .map(|id| evaluate_one(id, refs, cfg))
        .collect::<Result<_>>()?;

    let n = per_workload.len() as f64;
    let mean_abs_error_pct = per_workload.iter().map(|e| e.error_pct.abs()).sum::<f64>() / n;
    let baseline_mean_abs_error_pct = per_workload
        .iter()
        .map(|e| e.baseline_error_pct.abs())
        .sum::<f64>()
        / n;

    let mut histogram = Vec::new();
    for w in distance_bins.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let members: Vec<&WorkloadEval> = per_workload
            .iter()
            .filter(|e| e.neighbor.distance >= lo && e.neighbor.distance < hi)
            .collect();
        let mean = if members.is_empty() {
            0.0
        } else {
            members.iter().map(|e| e.error_pct).sum::<f64>() / members.len() as f64
        };
        histogram.push(HistogramBin {
            lo,
            hi,
            count: members.len(),
            mean_error_pct: mean,
        });
    }

    Ok(EvaluationReport {
        objective: cfg.objective,
        per_workload,
        mean_abs_error_pct,
        baseline_mean_abs_error_pct,
        histogram,
    })
}
