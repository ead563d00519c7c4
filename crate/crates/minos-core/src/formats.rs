//! External file formats: trace CSV (energy or pre-derived power, header
//! auto-detected), the `.meta.json` sidecar, kernel-counter CSV, feature
//! JSON, and the CSV/JSON report emissions. All emissions are byte-stable
//! for identical inputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::Dendrogram;
use crate::error::{Error, Result};
use crate::features::{KernelRecord, PowerSummary, SpikeVector, UtilizationPoint};
use crate::predict::EvaluationReport;
use crate::refset::ScalingProfile;
use crate::trace::{
    prepare, prepare_power, IngestOptions, PowerSample, PowerTrace, RawSample, RawSampleSeries,
};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Rows of a trace CSV, in whichever of the two accepted layouts the file
/// used.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceRows {
    /// `timestamp_us,energy_uj[,activity]` — a cumulative energy counter.
    Energy(Vec<RawSample>),
    /// `timestamp_us,power_w[,activity]` — pre-derived power; the derive
    /// step is skipped.
    Power {
        samples: Vec<PowerSample>,
        activity: Option<Vec<u64>>,
    },
}

impl TraceRows {
    /// Run the ingest pipeline appropriate for the layout.
    pub fn prepare(&self, device_tdp_w: f64, opts: IngestOptions) -> Result<PowerTrace> {
        match self {
            TraceRows::Energy(samples) => prepare(
                &RawSampleSeries {
                    samples: samples.clone(),
                    device_tdp_w,
                },
                opts,
            ),
            TraceRows::Power { samples, activity } => {
                // Power rows are point samples: activity annotates the
                // sample itself, so alignment is 1:1.
                prepare_power(samples, activity.as_deref(), device_tdp_w, opts)
            }
        }
    }
}

/// Read a trace CSV, auto-detecting the layout from the header row. The
/// `activity` column is optional; without it trimming is disabled.
pub fn read_trace_csv(path: &Path) -> Result<TraceRows> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| parse_err(path, 1, e.to_string()))?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let has_activity = match cols.as_slice() {
        ["timestamp_us", "energy_uj" | "power_w"] => false,
        ["timestamp_us", "energy_uj" | "power_w", "activity"] => true,
        other => {
            return Err(parse_err(
                path,
                1,
                format!("unrecognized trace header {other:?}"),
            ))
        }
    };
    let is_energy = cols[1] == "energy_uj";

    let mut energy_rows = Vec::new();
    let mut power_rows = Vec::new();
    let mut activity_rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        let ts: u64 = record[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad timestamp_us {:?}", &record[0])))?;
        let value: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad {} {:?}", cols[1], &record[1])))?;
        let activity = if has_activity {
            Some(
                record[2]
                    .parse::<u64>()
                    .map_err(|_| parse_err(path, line, format!("bad activity {:?}", &record[2])))?,
            )
        } else {
            None
        };
        if is_energy {
            energy_rows.push(RawSample {
                timestamp_us: ts,
                energy_uj: value,
                activity,
            });
        } else {
            power_rows.push(PowerSample {
                timestamp_us: ts,
                power_w: value,
            });
            if let Some(a) = activity {
                activity_rows.push(a);
            }
        }
    }
    if is_energy {
        Ok(TraceRows::Energy(energy_rows))
    } else {
        Ok(TraceRows::Power {
            samples: power_rows,
            activity: has_activity.then_some(activity_rows),
        })
    }
}

/// Write an energy-layout trace CSV. The activity column is emitted when
/// every sample carries one.
pub fn write_trace_csv(path: &Path, series: &RawSampleSeries) -> Result<()> {
    let with_activity = series.samples.iter().all(|s| s.activity.is_some());
    let mut out = String::new();
    if with_activity {
        out.push_str("timestamp_us,energy_uj,activity\n");
        for s in &series.samples {
            out.push_str(&format!(
                "{},{},{}\n",
                s.timestamp_us,
                s.energy_uj,
                s.activity.unwrap()
            ));
        }
    } else {
        out.push_str("timestamp_us,energy_uj\n");
        for s in &series.samples {
            out.push_str(&format!("{},{}\n", s.timestamp_us, s.energy_uj));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Sidecar metadata accompanying a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub device_tdp_w: f64,
    pub workload: String,
    pub config: String,
    pub freq_cap_mhz: Option<u32>,
}

impl TraceMeta {
    /// The `app/config` workload id this trace belongs to.
    pub fn workload_id(&self) -> String {
        format!("{}/{}", self.workload, self.config)
    }
}

/// Sidecar path for a trace file: same stem, `.meta.json` extension.
pub fn meta_path(trace: &Path) -> PathBuf {
    trace.with_extension("meta.json")
}

pub fn read_meta(path: &Path) -> Result<TraceMeta> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_meta(path: &Path, meta: &TraceMeta) -> Result<()> {
    std::fs::write(path, json_string(meta)?)?;
    Ok(())
}

/// Read a kernel-counter CSV: `kernel_name,duration_ns,sm_util_pct,dram_util_pct`.
pub fn read_kernels_csv(path: &Path) -> Result<Vec<KernelRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| parse_err(path, 1, e.to_string()))?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols != ["kernel_name", "duration_ns", "sm_util_pct", "dram_util_pct"] {
        return Err(parse_err(
            path,
            1,
            format!("unrecognized kernel header {cols:?}"),
        ));
    }
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        let parse_f64 = |field: usize, name: &str| -> Result<f64> {
            record[field]
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad {name} {:?}", &record[field])))
        };
        let rec = KernelRecord {
            name: record[0].to_string(),
            duration_ns: parse_f64(1, "duration_ns")?,
            sm_util_pct: parse_f64(2, "sm_util_pct")?,
            dram_util_pct: parse_f64(3, "dram_util_pct")?,
        };
        rec.validate()
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

/// Spike vector as emitted in feature documents (the device TDP lives in
/// the sidecar/reference set, not here).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeVectorDoc {
    pub bin_width: f64,
    pub values: Vec<f64>,
    pub total_spikes: u64,
    pub clamped: u64,
}

impl From<&SpikeVector> for SpikeVectorDoc {
    fn from(v: &SpikeVector) -> Self {
        SpikeVectorDoc {
            bin_width: v.bin_width,
            values: v.values.clone(),
            total_spikes: v.total_spikes,
            clamped: v.clamped,
        }
    }
}

/// Per-workload feature document. `utilization` serializes as `null` when
/// no kernel counters were supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDoc {
    pub workload: String,
    pub config: String,
    pub spike_vector: SpikeVectorDoc,
    pub summary: PowerSummary,
    pub utilization: Option<UtilizationPoint>,
}

/// One dendrogram merge as exported: `a`/`b` are node ids (leaves first,
/// then merge order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeDoc {
    pub a: usize,
    pub b: usize,
    pub dist: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramDoc {
    pub leaves: Vec<String>,
    pub linkage: crate::cluster::Linkage,
    pub merges: Vec<MergeDoc>,
}

impl From<&Dendrogram> for DendrogramDoc {
    fn from(d: &Dendrogram) -> Self {
        DendrogramDoc {
            leaves: d.leaves.clone(),
            linkage: d.linkage,
            merges: d
                .merges
                .iter()
                .map(|m| MergeDoc {
                    a: m.a,
                    b: m.b,
                    dist: m.distance,
                })
                .collect(),
        }
    }
}

/// Canonical JSON emission: pretty-printed, trailing newline, stable key
/// order from the struct definitions.
pub fn json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// CDF report CSV: `value,cum_frac`, monotone in both columns.
pub fn cdf_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("value,cum_frac\n");
    for &(v, f) in points {
        out.push_str(&format!("{v},{f}\n"));
    }
    out
}

/// Scaling-curve report CSV, one row per grid frequency.
pub fn scaling_csv(profile: &ScalingProfile) -> String {
    let mut out =
        String::from("freq_cap_mhz,p90_rel_tdp,p95_rel_tdp,p99_rel_tdp,perf_degradation_pct\n");
    for e in &profile.entries {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.freq_cap_mhz, e.p90_rel_tdp, e.p95_rel_tdp, e.p99_rel_tdp, e.perf_degradation_pct
        ));
    }
    out
}

/// Hold-one-out per-pair report CSV.
pub fn holdout_csv(report: &EvaluationReport) -> String {
    let mut out = String::from(
        "workload,neighbor,distance,chosen_freq_mhz,predicted,observed,error_pct,\
         baseline_neighbor,baseline_freq_mhz,baseline_error_pct\n",
    );
    for e in &report.per_workload {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            e.workload,
            e.neighbor.id,
            e.neighbor.distance,
            e.chosen_freq_mhz,
            e.predicted,
            e.observed,
            e.error_pct,
            e.baseline_neighbor.id,
            e.baseline_freq_mhz,
            e.baseline_error_pct
        ));
    }
    out
}

/// Neighbor-distance error histogram CSV.
pub fn histogram_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("lo,hi,count,mean_error_pct\n");
    for b in &report.histogram {
        out.push_str(&format!(
            "{},{},{},{}\n",
            b.lo, b.hi, b.count, b.mean_error_pct
        ));
    }
    out
}
