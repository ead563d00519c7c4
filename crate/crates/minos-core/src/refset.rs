//! The reference set: per-workload spike magnitudes, summaries, utilization
//! points, and frequency-scaling profiles, with versioned on-disk storage.
//!
//! Raw spike magnitudes are stored (quantized to 1e-4 of TDP) rather than a
//! single binned vector, so vectors can be rebuilt at any bin width without
//! re-reading traces.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_spike_vector, PowerSummary, SpikeVector, UtilizationPoint};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const SCHEMA_VERSION: u32 = 1;

/// File extension for reference set stores.
pub const REFSET_EXTENSION: &str = "minosref.json";

/// Allowed negative degradation, in percent: capping cannot speed a workload
/// up beyond measurement noise.
const DEGRADATION_TOLERANCE_PCT: f64 = 1.0;

/// One frequency point of a scaling profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingEntry {
    pub freq_cap_mhz: u32,
    pub p90_rel_tdp: f64,
    pub p95_rel_tdp: f64,
    pub p99_rel_tdp: f64,
    pub perf_degradation_pct: f64,
}

/// Percentile selector for power-centric capping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PercentileChoice {
    P90,
    P95,
    P99,
}

impl PercentileChoice {
    pub fn of(&self, e: &ScalingEntry) -> f64 {
        match self {
            PercentileChoice::P90 => e.p90_rel_tdp,
            PercentileChoice::P95 => e.p95_rel_tdp,
            PercentileChoice::P99 => e.p99_rel_tdp,
        }
    }
}

impl std::str::FromStr for PercentileChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "90" | "p90" => Ok(PercentileChoice::P90),
            "95" | "p95" => Ok(PercentileChoice::P95),
            "99" | "p99" => Ok(PercentileChoice::P99),
            other => Err(Error::InvalidParameter(format!(
                "percentile must be 90, 95, or 99, got {other}"
            ))),
        }
    }
}

/// Per-workload frequency-scaling record: spike percentiles and performance
/// degradation at each swept cap, relative to the uncapped run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingProfile {
    pub workload: String,
    pub entries: Vec<ScalingEntry>,
    pub uncapped_freq_mhz: u32,
    pub uncapped_runtime_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiling_times_s: Option<BTreeMap<u32, f64>>,
}

impl ScalingProfile {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::InvalidRecord(format!(
                "profile for {} has no entries",
                self.workload
            )));
        }
        for pair in self.entries.windows(2) {
            if pair[1].freq_cap_mhz <= pair[0].freq_cap_mhz {
                return Err(Error::InvalidRecord(format!(
                    "profile for {} is not sorted by unique ascending freq_cap",
                    self.workload
                )));
            }
        }
        let last = self.entries.last().unwrap();
        if last.freq_cap_mhz != self.uncapped_freq_mhz {
            return Err(Error::InvalidRecord(format!(
                "profile for {}: max grid entry {} != uncapped {}",
                self.workload, last.freq_cap_mhz, self.uncapped_freq_mhz
            )));
        }
        if last.perf_degradation_pct.abs() > 1e-9 {
            return Err(Error::InvalidRecord(format!(
                "profile for {}: degradation at uncapped freq must be 0, got {}",
                self.workload, last.perf_degradation_pct
            )));
        }
        for e in &self.entries {
            if e.perf_degradation_pct < -DEGRADATION_TOLERANCE_PCT {
                return Err(Error::InvalidRecord(format!(
                    "profile for {}: degradation {} below -{}% tolerance at {} MHz",
                    self.workload,
                    e.perf_degradation_pct,
                    DEGRADATION_TOLERANCE_PCT,
                    e.freq_cap_mhz
                )));
            }
        }
        Ok(())
    }

    pub fn entry_at(&self, freq_mhz: u32) -> Option<&ScalingEntry> {
        self.entries.iter().find(|e| e.freq_cap_mhz == freq_mhz)
    }

    pub fn min_freq_mhz(&self) -> u32 {
        self.entries.first().unwrap().freq_cap_mhz
    }
}

/// Everything stored about one profiled workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadRecord {
    /// Spike magnitudes relative to TDP, quantized to 1e-4.
    pub magnitudes_rel_tdp: Vec<f64>,
    pub summary: PowerSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilization: Option<UtilizationPoint>,
    pub profile: ScalingProfile,
    /// Explicit metadata flag marking the largest input/batch configuration
    /// of an app; never inferred from config strings.
    #[serde(default)]
    pub largest_input: bool,
}

/// The reference corpus E_f keyed by `app/config` workload id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub schema_version: u32,
    pub device_tdp_w: f64,
    pub workloads: BTreeMap<String, WorkloadRecord>,
}

fn quantize(magnitudes: &[f64]) -> Vec<f64> {
    magnitudes.iter().map(|m| (m * 1e4).round() / 1e4).collect()
}

impl ReferenceSet {
    pub fn new(device_tdp_w: f64) -> Self {
        ReferenceSet {
            schema_version: SCHEMA_VERSION,
            device_tdp_w,
            workloads: BTreeMap::new(),
        }
    }

    /// App name portion of a workload id (`app/config` convention).
    pub fn app_of(id: &str) -> &str {
        id.split('/').next().unwrap_or(id)
    }

    pub fn add(
        &mut self,
        id: &str,
        magnitudes_rel_tdp: &[f64],
        summary: PowerSummary,
        utilization: Option<UtilizationPoint>,
        profile: ScalingProfile,
        largest_input: bool,
    ) -> Result<()> {
        if self.workloads.contains_key(id) {
            return Err(Error::Conflict(id.to_string()));
        }
        profile.validate()?;
        if let Some(m) = magnitudes_rel_tdp.iter().find(|&&m| m < 0.5) {
            return Err(Error::InvalidRecord(format!(
                "magnitude {m} below the detection threshold for {id}"
            )));
        }
        self.workloads.insert(
            id.to_string(),
            WorkloadRecord {
                magnitudes_rel_tdp: quantize(magnitudes_rel_tdp),
                summary,
                utilization,
                profile,
                largest_input,
            },
        );
        Ok(())
    }

    pub fn remove(&mut self, id: &str) -> Option<WorkloadRecord> {
        self.workloads.remove(id)
    }

    /// A copy with one workload excluded, for hold-one-out evaluation.
    pub fn without(&self, id: &str) -> ReferenceSet {
        let mut copy = self.clone();
        copy.workloads.remove(id);
        copy
    }

    /// Rebuild spike vectors for every workload at the requested bin width.
    /// No-spike workloads are included as zero vectors; neighbor queries
    /// skip them.
    pub fn materialize_vectors(&self, bin_width: f64) -> Result<BTreeMap<String, SpikeVector>> {
        #[cfg(feature = "parallel")]
        {
            self.workloads
                .par_iter()
                .map(|(id, rec)| {
                    build_spike_vector(&rec.magnitudes_rel_tdp, bin_width, self.device_tdp_w)
                        .map(|v| (id.clone(), v))
                })
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.workloads
                .iter()
                .map(|(id, rec)| {
                    build_spike_vector(&rec.magnitudes_rel_tdp, bin_width, self.device_tdp_w)
                        .map(|v| (id.clone(), v))
                })
                .collect()
        }
    }

    /// Utilization points for every workload that has one.
    pub fn utilization_points(&self) -> BTreeMap<String, UtilizationPoint> {
        self.workloads
            .iter()
            .filter_map(|(id, rec)| rec.utilization.map(|u| (id.clone(), u)))
            .collect()
    }

    /// Keep one configuration per app: the single config when an app has
    /// exactly one, otherwise the one flagged `largest_input`.
    pub fn one_input_per_workload(&self) -> Result<ReferenceSet> {
        let mut by_app: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for id in self.workloads.keys() {
            by_app.entry(Self::app_of(id)).or_default().push(id);
        }
        let mut out = ReferenceSet::new(self.device_tdp_w);
        out.schema_version = self.schema_version;
        for (app, ids) in by_app {
            let keep: &str = if ids.len() == 1 {
                ids[0]
            } else {
                let mut flagged = ids
                    .iter()
                    .copied()
                    .filter(|id| self.workloads[*id].largest_input);
                match (flagged.next(), flagged.next()) {
                    (Some(one), None) => one,
                    _ => return Err(Error::AmbiguousSelection(app.to_string())),
                }
            };
            out.workloads
                .insert(keep.to_string(), self.workloads[keep].clone());
        }
        Ok(out)
    }

    /// Serialize to the canonical JSON document (stable key order, trailing
    /// newline). Floats use the shortest representation that round-trips
    /// bit-exactly.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Atomically replace the store file: write to a temp file in the same
    /// directory, then rename over the target.
    pub fn store(&self, path: &Path) -> Result<()> {
        let json = self.to_json()?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        std::fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(json.as_bytes())?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ReferenceSet> {
        let text = std::fs::read_to_string(path)?;
        let set: ReferenceSet = serde_json::from_str(&text)?;
        if set.schema_version > SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: set.schema_version,
                supported: SCHEMA_VERSION,
            });
        }
        for rec in set.workloads.values() {
            rec.profile.validate()?;
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::PowerSummary;

    pub(crate) fn profile(id: &str) -> ScalingProfile {
        ScalingProfile {
            workload: id.to_string(),
            entries: vec![
                ScalingEntry {
                    freq_cap_mhz: 1300,
                    p90_rel_tdp: 1.1,
                    p95_rel_tdp: 1.15,
                    p99_rel_tdp: 1.2,
                    perf_degradation_pct: 10.0,
                },
                ScalingEntry {
                    freq_cap_mhz: 2100,
                    p90_rel_tdp: 1.5,
                    p95_rel_tdp: 1.55,
                    p99_rel_tdp: 1.6,
                    perf_degradation_pct: 0.0,
                },
            ],
            uncapped_freq_mhz: 2100,
            uncapped_runtime_s: 100.0,
            profiling_times_s: None,
        }
    }

    fn summary() -> PowerSummary {
        PowerSummary::from_rel_samples(&[0.8, 1.0, 1.2, 1.4]).unwrap()
    }

    #[test]
    fn add_then_get_round_trips() {
        let mut set = ReferenceSet::new(700.0);
        let mags = [0.5123, 1.2345, 1.9999];
        set.add("app/cfg", &mags, summary(), None, profile("app/cfg"), true)
            .unwrap();
        let rec = &set.workloads["app/cfg"];
        assert_eq!(rec.magnitudes_rel_tdp, vec![0.5123, 1.2345, 1.9999]);
    }

    #[test]
    fn duplicate_id_conflicts() {
        let mut set = ReferenceSet::new(700.0);
        set.add("a/x", &[0.6], summary(), None, profile("a/x"), false)
            .unwrap();
        assert!(matches!(
            set.add("a/x", &[0.6], summary(), None, profile("a/x"), false),
            Err(Error::Conflict(_))
        ));
    }

    #[test]
    fn invalid_profile_rejected() {
        let mut set = ReferenceSet::new(700.0);
        let mut p = profile("a/x");
        p.entries[0].perf_degradation_pct = -5.0;
        assert!(matches!(
            set.add("a/x", &[0.6], summary(), None, p, false),
            Err(Error::InvalidRecord(_))
        ));
        let mut p = profile("a/x");
        p.uncapped_freq_mhz = 1900;
        assert!(matches!(
            set.add("a/x", &[0.6], summary(), None, p, false),
            Err(Error::InvalidRecord(_))
        ));
    }

    #[test]
    fn rebinning_satisfies_merge_identity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut set = ReferenceSet::new(700.0);
        for i in 0..20 {
            let mags: Vec<f64> = (0..200).map(|_| rng.gen_range(0.5..2.0)).collect();
            let id = format!("app{i}/cfg");
            set.add(&id, &mags, summary(), None, profile(&id), false)
                .unwrap();
        }
        let fine = set.materialize_vectors(0.05).unwrap();
        let coarse = set.materialize_vectors(0.1).unwrap();
        for (id, cv) in &coarse {
            let fv = &fine[id];
            for j in 0..cv.values.len() {
                let merged = fv.values[2 * j] + fv.values[2 * j + 1];
                assert!((merged - cv.values[j]).abs() < 1e-12, "{id} bin {j}");
            }
        }
    }

    #[test]
    fn one_input_identity_and_flagged_selection() {
        let mut set = ReferenceSet::new(700.0);
        set.add(
            "solo/only",
            &[0.6],
            summary(),
            None,
            profile("solo/only"),
            false,
        )
        .unwrap();
        set.add(
            "multi/small",
            &[0.7],
            summary(),
            None,
            profile("multi/small"),
            false,
        )
        .unwrap();
        set.add(
            "multi/big",
            &[0.8],
            summary(),
            None,
            profile("multi/big"),
            true,
        )
        .unwrap();
        let filtered = set.one_input_per_workload().unwrap();
        assert_eq!(filtered.workloads.len(), 2);
        assert!(filtered.workloads.contains_key("solo/only"));
        assert!(filtered.workloads.contains_key("multi/big"));
    }

    #[test]
    fn one_input_ambiguous_errors() {
        let mut set = ReferenceSet::new(700.0);
        set.add("m/a", &[0.6], summary(), None, profile("m/a"), false)
            .unwrap();
        set.add("m/b", &[0.7], summary(), None, profile("m/b"), false)
            .unwrap();
        assert!(matches!(
            set.one_input_per_workload(),
            Err(Error::AmbiguousSelection(_))
        ));
    }

    #[test]
    fn eighteen_workloads_filter_to_eleven() {
        // 11 apps; 7 of them have two configs, one flagged largest.
        let mut set = ReferenceSet::new(700.0);
        for a in 0..11 {
            let id = format!("app{a:02}/base");
            set.add(&id, &[0.6], summary(), None, profile(&id), a >= 7)
                .unwrap();
            if a < 7 {
                let id2 = format!("app{a:02}/large");
                set.add(&id2, &[0.7], summary(), None, profile(&id2), true)
                    .unwrap();
            }
        }
        assert_eq!(set.workloads.len(), 18);
        let filtered = set.one_input_per_workload().unwrap();
        assert_eq!(filtered.workloads.len(), 11);
        for a in 0..7 {
            assert!(filtered.workloads.contains_key(&format!("app{a:02}/large")));
        }
    }

    #[test]
    fn store_load_round_trip_and_order_independence() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.minosref.json");
        let mut set = ReferenceSet::new(700.0);
        for i in 0..5 {
            let mags: Vec<f64> = (0..50).map(|_| rng.gen_range(0.5..2.0)).collect();
            let id = format!("app{i}/cfg");
            let util = UtilizationPoint {
                app_sm_util: rng.gen_range(0.0..100.0),
                app_dram_util: rng.gen_range(0.0..100.0),
            };
            set.add(&id, &mags, summary(), Some(util), profile(&id), false)
                .unwrap();
        }
        set.store(&path).unwrap();
        let loaded = ReferenceSet::load(&path).unwrap();
        assert_eq!(set, loaded);

        // Remove then re-add a workload: equivalent set, identical bytes.
        let mut set2 = set.clone();
        let rec = set2.remove("app2/cfg").unwrap();
        set2.workloads.insert("app2/cfg".into(), rec);
        assert_eq!(set.to_json().unwrap(), set2.to_json().unwrap());
    }

    #[test]
    fn newer_schema_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.minosref.json");
        let mut set = ReferenceSet::new(700.0);
        set.schema_version = SCHEMA_VERSION + 1;
        set.store(&path).unwrap();
        assert!(matches!(
            ReferenceSet::load(&path),
            Err(Error::SchemaVersion { .. })
        ));
    }
}
