//! Deterministic fixture reference sets with construction-time ground
//! truth: spike distributions placed at known cosine distances and scaling
//! profiles with known bound crossings, so end-to-end predictions have
//! exact expected outcomes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::{PowerSummary, UtilizationPoint};
use crate::predict::TargetFeatures;
use crate::refset::ReferenceSet;
use crate::synth::{synth_profile, SYNTH_FREQ_GRID};

pub const FIXTURE_TDP_W: f64 = 700.0;

/// Two-level magnitude population: `frac` of `n` samples at `a`, the rest
/// at `b`.
fn two_level(n: usize, frac: f64, a: f64, b: f64) -> Vec<f64> {
    let ka = (frac * n as f64).round() as usize;
    let mut m = vec![a; ka];
    m.extend(std::iter::repeat_n(b, n - ka));
    m
}

fn summary_of(mags: &[f64]) -> PowerSummary {
    PowerSummary::from_rel_samples(mags).unwrap()
}

fn util(sm: f64, dram: f64) -> UtilizationPoint {
    UtilizationPoint {
        app_sm_util: sm,
        app_dram_util: dram,
    }
}

/// Reference corpus plus two query workloads with known neighbors and caps.
pub struct CaseStudy {
    pub refs: ReferenceSet,
    /// Query whose spike vector sits at cosine distance 0.05 from
    /// `sd-xl/base`; expected power cap 1300 MHz, perf cap uncapped.
    pub faiss: TargetFeatures,
    /// Query whose spike vector sits at cosine distance 0.01 from
    /// `milc/24`; expected power cap 1500 MHz, perf cap 1900 MHz.
    pub qwen: TargetFeatures,
}

/// A five-reference corpus engineered so the two queries have unambiguous
/// neighbors under both objectives.
///
/// Spike placement: a one-hot population at magnitude `m` is at cosine
/// distance `1 - p / sqrt(p^2 + (1-p)^2)` from a two-level population with
/// fraction `p` at `m`; `p = 0.75263` gives 0.05 and `p = 0.87528` gives
/// 0.01. Profiles come from [`synth_profile`], so the power-bound crossing
/// frequency is a constructor argument.
pub fn case_study() -> CaseStudy {
    let n = 100_000;
    let mut refs = ReferenceSet::new(FIXTURE_TDP_W);

    let sdxl = two_level(n, 0.75263, 0.52, 0.62);
    refs.add(
        "sd-xl/base",
        &sdxl,
        summary_of(&sdxl),
        Some(util(37.18, 40.0)),
        synth_profile("sd-xl/base", 1300, 3.0).unwrap(),
        true,
    )
    .unwrap();

    let milc = two_level(n, 0.87528, 1.22, 1.32);
    refs.add(
        "milc/24",
        &milc,
        summary_of(&milc),
        Some(util(55.0, 70.0)),
        synth_profile("milc/24", 1500, 4.0).unwrap(),
        true,
    )
    .unwrap();

    let deepmd = vec![0.82; n];
    refs.add(
        "deepmd/water",
        &deepmd,
        summary_of(&deepmd),
        Some(util(80.0, 33.64)),
        synth_profile("deepmd/water", 1700, 2.0).unwrap(),
        true,
    )
    .unwrap();

    let lammps = vec![1.72; n];
    refs.add(
        "lammps/lj",
        &lammps,
        summary_of(&lammps),
        Some(util(10.0, 10.0)),
        synth_profile("lammps/lj", 2100, 5.0).unwrap(),
        true,
    )
    .unwrap();

    // A no-spike reference: graph traversal that never crosses 0.5 x TDP.
    refs.add(
        "pagerank/web",
        &[],
        summary_of(&[0.18, 0.22, 0.25, 0.31]),
        Some(util(90.0, 90.0)),
        synth_profile("pagerank/web", 1300, 1.0).unwrap(),
        true,
    )
    .unwrap();

    let faiss_mags = vec![0.52; n];
    let faiss = TargetFeatures {
        workload: "faiss/ivf".into(),
        summary: summary_of(&faiss_mags),
        magnitudes_rel_tdp: faiss_mags,
        utilization: Some(util(30.0, 40.0)),
    };

    let qwen_mags = vec![1.22; n];
    let qwen = TargetFeatures {
        workload: "qwen-moe/a2.7b".into(),
        summary: summary_of(&qwen_mags),
        magnitudes_rel_tdp: qwen_mags,
        utilization: Some(util(80.0, 20.0)),
    };

    CaseStudy { refs, faiss, qwen }
}

/// Group layout for [`twin_refset`]: (app, members, magnitude level,
/// utilization, crossing frequency). Every member of a group shares the
/// exact magnitudes, utilization, and scaling curve, so each workload's
/// nearest neighbor under hold-one-out is a twin with an identical curve.
type TwinGroup = (&'static str, usize, f64, (f64, f64), u32);

const TWIN_GROUPS: [TwinGroup; 5] = [
    ("gemm", 2, 0.55, (10.0, 10.0), 1300),
    ("stencil", 2, 0.62, (20.0, 80.0), 1500),
    ("attention", 2, 1.15, (50.0, 50.0), 1700),
    ("fft", 2, 1.45, (80.0, 20.0), 1900),
    ("bfs", 3, 1.75, (90.0, 90.0), 2100),
];

/// Eleven workloads in five twin groups; hold-one-out error is exactly zero
/// under both objectives.
pub fn twin_refset() -> ReferenceSet {
    let mut refs = ReferenceSet::new(FIXTURE_TDP_W);
    for &(app, members, level, (sm, dram), crossing) in &TWIN_GROUPS {
        for m in 0..members {
            let id = format!("{app}/v{m}");
            let mags = vec![level; 500];
            refs.add(
                &id,
                &mags,
                summary_of(&mags),
                Some(util(sm, dram)),
                synth_profile(&id, crossing, 2.0).unwrap(),
                m == 0,
            )
            .unwrap();
        }
    }
    refs
}

/// [`twin_refset`] with one `bfs` member's spikes moved to an unoccupied
/// region (a 50/50 split at 0.95 and 1.05, cosine distance > 0.1 to every
/// other workload at every candidate bin width) and its curve's crossing
/// lowered to 1300 MHz while everything else crosses at 1500 MHz or above.
/// Returns the set and the isolated workload id.
pub fn twin_refset_isolated() -> (ReferenceSet, String) {
    let mut refs = ReferenceSet::new(FIXTURE_TDP_W);
    for &(app, members, level, (sm, dram), crossing) in &TWIN_GROUPS {
        let crossing = crossing.max(1500);
        for m in 0..members {
            let id = format!("{app}/v{m}");
            let isolated = app == "bfs" && m == 2;
            let mags = if isolated {
                two_level(500, 0.5, 0.95, 1.05)
            } else {
                vec![level; 500]
            };
            let profile_crossing = if isolated { 1300 } else { crossing };
            refs.add(
                &id,
                &mags,
                summary_of(&mags),
                Some(util(sm, dram)),
                synth_profile(&id, profile_crossing, 2.0).unwrap(),
                m == 0,
            )
            .unwrap();
        }
    }
    (refs, "bfs/v2".into())
}

/// A target plus two references sharing its mean power but not its spike
/// shape: the mean-power baseline picks the wrong curve, the spike-vector
/// neighbor picks the right one.
pub struct BaselineTrap {
    pub refs: ReferenceSet,
    pub target: TargetFeatures,
    /// The target's own scaling curve, for scoring observed power.
    pub target_profile: crate::refset::ScalingProfile,
}

pub fn baseline_trap() -> BaselineTrap {
    let n = 1000;
    let mut refs = ReferenceSet::new(FIXTURE_TDP_W);

    // Mean 1.0 like the target, but bimodal spikes and a curve that never
    // crosses the bound below the top of the grid.
    let bimodal = two_level(n, 0.5, 0.6, 1.4);
    refs.add(
        "alpha/bimodal",
        &bimodal,
        summary_of(&bimodal),
        Some(util(40.0, 40.0)),
        synth_profile("alpha/bimodal", 2100, 2.0).unwrap(),
        true,
    )
    .unwrap();

    // Slightly off in mean, same spike bin as the target, curve matching
    // the target's crossing.
    let close = vec![1.05; n];
    refs.add(
        "beta/steady",
        &close,
        summary_of(&close),
        Some(util(60.0, 60.0)),
        synth_profile("beta/steady", 1300, 2.0).unwrap(),
        true,
    )
    .unwrap();

    let mags = vec![1.0; n];
    let target = TargetFeatures {
        workload: "gamma/steady".into(),
        summary: summary_of(&mags),
        magnitudes_rel_tdp: mags,
        utilization: Some(util(55.0, 55.0)),
    };

    BaselineTrap {
        refs,
        target,
        target_profile: synth_profile("gamma/steady", 1300, 2.0).unwrap(),
    }
}

/// Sixteen workloads drawn from eight smooth unimodal spike distributions
/// (two instances each, different draws). Instances of the same archetype
/// are mutual nearest neighbors at any reasonable bin width, so bin-width
/// sensitivity of the neighbor error is low by construction.
pub fn smooth_refset(seed: u64) -> ReferenceSet {
    let mut refs = ReferenceSet::new(FIXTURE_TDP_W);
    for a in 0..8u64 {
        let peak = 0.55 + 0.2 * a as f64;
        let crossing = SYNTH_FREQ_GRID[(a % 5) as usize];
        for inst in 0..2u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (a * 16 + inst + 1));
            // Triangular-ish density: the mean of two uniforms centered on
            // the peak, clipped to the detection range.
            let mags: Vec<f64> = (0..2000)
                .map(|_| {
                    let u1: f64 = rng.gen_range(-0.4..0.4);
                    let u2: f64 = rng.gen_range(-0.4..0.4);
                    (peak + 0.5 * (u1 + u2)).clamp(0.5, 1.9999)
                })
                .collect();
            let id = format!("arch{a}/run{inst}");
            refs.add(
                &id,
                &mags,
                summary_of(&mags),
                Some(util(10.0 + 10.0 * a as f64, 90.0 - 10.0 * a as f64)),
                synth_profile(&id, crossing, 2.0).unwrap(),
                inst == 0,
            )
            .unwrap();
        }
    }
    refs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::cosine_distance;
    use crate::features::build_spike_vector;

    #[test]
    fn case_study_distances_are_as_constructed() {
        let cs = case_study();
        let vectors = cs.refs.materialize_vectors(0.05).unwrap();
        let faiss = build_spike_vector(&cs.faiss.magnitudes_rel_tdp, 0.05, FIXTURE_TDP_W).unwrap();
        let qwen = build_spike_vector(&cs.qwen.magnitudes_rel_tdp, 0.05, FIXTURE_TDP_W).unwrap();
        let d1 = cosine_distance(&faiss, &vectors["sd-xl/base"]).unwrap();
        assert!((d1 - 0.05).abs() < 1e-3, "faiss-sdxl {d1}");
        let d2 = cosine_distance(&qwen, &vectors["milc/24"]).unwrap();
        assert!((d2 - 0.01).abs() < 1e-3, "qwen-milc {d2}");
    }

    #[test]
    fn twin_groups_count() {
        let refs = twin_refset();
        assert_eq!(refs.workloads.len(), 11);
        let (iso, id) = twin_refset_isolated();
        assert_eq!(iso.workloads.len(), 11);
        assert!(iso.workloads.contains_key(&id));
    }

    #[test]
    fn isolated_workload_is_far_from_everything() {
        use crate::predict::DEFAULT_BIN_CANDIDATES;
        let (refs, id) = twin_refset_isolated();
        for &c in &DEFAULT_BIN_CANDIDATES {
            let vectors = refs.materialize_vectors(c).unwrap();
            let iso = &vectors[&id];
            for (other, v) in &vectors {
                if other == &id {
                    continue;
                }
                let d = cosine_distance(iso, v).unwrap();
                assert!(d > 0.1, "c={c} {other}: {d}");
            }
        }
    }

    #[test]
    fn baseline_trap_geometry() {
        let t = baseline_trap();
        // Baseline metric: alpha matches the target's mean exactly.
        let alpha = &t.refs.workloads["alpha/bimodal"];
        let beta = &t.refs.workloads["beta/steady"];
        assert!((alpha.summary.mean_rel_tdp - t.target.summary.mean_rel_tdp).abs() < 1e-9);
        assert!((beta.summary.mean_rel_tdp - t.target.summary.mean_rel_tdp).abs() > 1e-3);
        // Spike metric: beta shares the target's bin at the default width.
        let vectors = t.refs.materialize_vectors(0.1).unwrap();
        let target = build_spike_vector(&t.target.magnitudes_rel_tdp, 0.1, FIXTURE_TDP_W).unwrap();
        assert!(cosine_distance(&target, &vectors["beta/steady"]).unwrap() < 1e-9);
        assert!(cosine_distance(&target, &vectors["alpha/bimodal"]).unwrap() > 0.9);
    }
}
