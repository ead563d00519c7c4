//! `minos` — frequency-cap recommendation from power telemetry.
//!
//! Every command is deterministic given its inputs and `--seed`. Successful
//! output goes to stdout (or files under `--out`); errors are emitted as a
//! single JSON object on stderr and the exit code is non-zero.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use minos_core::cluster::{hac_build, kmeans_fit, silhouette_sweep, Linkage};
use minos_core::features::{
    aggregate_utilization, build_spike_vector, cdf_points, detect_spikes, summarize_power,
    DEFAULT_BIN_WIDTH,
};
use minos_core::formats::{
    cdf_csv, histogram_csv, holdout_csv, json_string, meta_path, read_kernels_csv, read_meta,
    read_trace_csv, scaling_csv, write_meta, write_trace_csv, DendrogramDoc, FeatureDoc,
    SpikeVectorDoc, TraceMeta,
};
use minos_core::predict::{
    default_distance_bins, holdout_evaluate, select_optimal_freq, Objective, PredictConfig,
    TargetFeatures,
};
use minos_core::refset::{PercentileChoice, ReferenceSet, ScalingProfile};
use minos_core::synth::{synth_profile, synth_trace, SynthSpec};
use minos_core::trace::{IngestOptions, PowerTrace};
use minos_core::Error;

#[derive(Parser)]
#[command(
    name = "minos",
    version,
    about = "GPU frequency-cap recommendation from power telemetry"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// Reference set file (`.minosref.json`).
    #[arg(long, global = true, env = "MINOS_REFSET")]
    refset: Option<PathBuf>,

    /// Device TDP in watts; overrides the trace sidecar.
    #[arg(long, global = true)]
    tdp_w: Option<f64>,

    /// Spike-vector bin width relative to TDP, or `auto` to search the
    /// candidate set.
    #[arg(long, global = true, default_value = "auto")]
    bin_width: String,

    /// Cap objective: `power` or `perf`.
    #[arg(long, global = true, default_value = "power")]
    objective: String,

    /// Power bound as a multiple of TDP.
    #[arg(long, global = true, default_value_t = 1.3)]
    power_bound: f64,

    /// Performance-degradation bound in percent.
    #[arg(long, global = true, default_value_t = 5.0)]
    perf_bound: f64,

    /// Power percentile for the power objective: 90, 95, or 99.
    #[arg(long, global = true, default_value = "90")]
    percentile: String,

    /// Perf-objective frequency floor in MHz (default: 60% of the
    /// neighbor's uncapped frequency).
    #[arg(long, global = true)]
    min_freq_mhz: Option<u32>,

    /// Seed for the K-means initialization.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output directory; when absent, results go to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Featurize a trace: spike vector, power summary, utilization.
    Ingest {
        /// Trace CSV (`timestamp_us,energy_uj[,activity]` or
        /// `timestamp_us,power_w[,activity]`), with a `.meta.json` sidecar.
        #[arg(long)]
        trace: PathBuf,
        /// Kernel counters CSV for the utilization point.
        #[arg(long)]
        kernels: Option<PathBuf>,
        /// Treat an energy-counter regression as a 64-bit wrap.
        #[arg(long)]
        unwrap_counter: bool,
    },
    /// Cluster the reference set: agglomerative over spike vectors, or
    /// K-means over utilization points.
    Cluster {
        /// `hac` or `kmeans`.
        #[arg(long, default_value = "hac")]
        method: String,
        /// HAC linkage: `ward`, `average`, or `complete`.
        #[arg(long, default_value = "ward")]
        linkage: String,
        /// Fixed K for K-means; without it the silhouette sweep picks one.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Reference-set maintenance.
    Refset {
        #[command(subcommand)]
        action: RefsetAction,
    },
    /// Recommend a frequency cap for a new workload.
    Predict {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        kernels: Option<PathBuf>,
        #[arg(long)]
        unwrap_counter: bool,
    },
    /// Hold-one-out evaluation over the reference set.
    Holdout,
    /// Generate synthetic traces and scaling profiles.
    Synth {
        /// Trace spec JSON; emits `<name>.csv` + `<name>.meta.json`.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Base name for generated trace files.
        #[arg(long, default_value = "synthetic")]
        name: String,
        /// Emit a scaling profile crossing the power bound at this frequency.
        #[arg(long)]
        crossing_mhz: Option<u32>,
        /// Degradation slope for the generated profile, percent per 100 MHz.
        #[arg(long, default_value_t = 2.0)]
        slope_pct: f64,
        /// Workload id for the generated profile.
        #[arg(long, default_value = "synthetic/base")]
        workload: String,
    },
    /// Plot-ready CSV reports.
    Report {
        #[command(subcommand)]
        kind: ReportKind,
    },
}

#[derive(Subcommand)]
enum RefsetAction {
    /// Featurize a trace and add it to the reference set.
    Add {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        kernels: Option<PathBuf>,
        /// Scaling profile JSON for this workload.
        #[arg(long)]
        profile: PathBuf,
        /// Mark this config as the app's largest input.
        #[arg(long)]
        largest_input: bool,
        #[arg(long)]
        unwrap_counter: bool,
    },
    /// List stored workloads.
    List,
    /// Keep one configuration per app (the flagged largest input).
    FilterLargest,
}

#[derive(Subcommand)]
enum ReportKind {
    /// Relative-power CDF points of a trace.
    Cdf {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        unwrap_counter: bool,
    },
    /// Scaling curve of a stored workload.
    Scaling {
        #[arg(long)]
        workload: String,
    },
    /// Neighbor-distance error histogram from hold-one-out.
    Histogram,
}

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => {}
        Err(e) => {
            let doc = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{doc}");
            std::process::exit(1);
        }
    }
}

fn run(cli: &Cli) -> minos_core::Result<()> {
    match &cli.command {
        Command::Ingest {
            trace,
            kernels,
            unwrap_counter,
        } => cmd_ingest(&cli.global, trace, kernels.as_deref(), *unwrap_counter),
        Command::Cluster { method, linkage, k } => cmd_cluster(&cli.global, method, linkage, *k),
        Command::Refset { action } => match action {
            RefsetAction::Add {
                trace,
                kernels,
                profile,
                largest_input,
                unwrap_counter,
            } => cmd_refset_add(
                &cli.global,
                trace,
                kernels.as_deref(),
                profile,
                *largest_input,
                *unwrap_counter,
            ),
            RefsetAction::List => cmd_refset_list(&cli.global),
            RefsetAction::FilterLargest => cmd_refset_filter(&cli.global),
        },
        Command::Predict {
            trace,
            kernels,
            unwrap_counter,
        } => cmd_predict(&cli.global, trace, kernels.as_deref(), *unwrap_counter),
        Command::Holdout => cmd_holdout(&cli.global),
        Command::Synth {
            spec,
            name,
            crossing_mhz,
            slope_pct,
            workload,
        } => cmd_synth(
            &cli.global,
            spec.as_deref(),
            name,
            *crossing_mhz,
            *slope_pct,
            workload,
        ),
        Command::Report { kind } => match kind {
            ReportKind::Cdf {
                trace,
                unwrap_counter,
            } => cmd_report_cdf(&cli.global, trace, *unwrap_counter),
            ReportKind::Scaling { workload } => cmd_report_scaling(&cli.global, workload),
            ReportKind::Histogram => cmd_report_histogram(&cli.global),
        },
    }
}

fn refset_path(g: &GlobalOpts) -> minos_core::Result<&Path> {
    g.refset.as_deref().ok_or_else(|| {
        Error::InvalidParameter("no reference set: pass --refset or set MINOS_REFSET".into())
    })
}

fn load_refset(g: &GlobalOpts) -> minos_core::Result<ReferenceSet> {
    ReferenceSet::load(refset_path(g)?)
}

/// `--bin-width`: a concrete width, or `None` for `auto`.
fn parse_bin_width(g: &GlobalOpts) -> minos_core::Result<Option<f64>> {
    if g.bin_width == "auto" {
        return Ok(None);
    }
    let c: f64 = g
        .bin_width
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("bad --bin-width {:?}", g.bin_width)))?;
    minos_core::features::bin_count(c)?;
    Ok(Some(c))
}

fn predict_config(g: &GlobalOpts) -> minos_core::Result<PredictConfig> {
    let mut cfg = PredictConfig::new(g.objective.parse::<Objective>()?);
    cfg.power_bound_multiple = g.power_bound;
    cfg.perf_bound_pct = g.perf_bound;
    cfg.percentile = g.percentile.parse::<PercentileChoice>()?;
    cfg.min_freq_mhz = g.min_freq_mhz;
    cfg.bin_width = parse_bin_width(g)?;
    Ok(cfg)
}

/// Write to `<out>/<name>` when `--out` is given, else print to stdout.
fn emit(g: &GlobalOpts, name: &str, content: &str) -> minos_core::Result<()> {
    match &g.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(name), content)?;
        }
        None => print!("{content}"),
    }
    Ok(())
}

struct Ingested {
    meta: TraceMeta,
    trace: PowerTrace,
    magnitudes: Vec<f64>,
    utilization: Option<minos_core::features::UtilizationPoint>,
}

fn ingest_trace(
    g: &GlobalOpts,
    trace_path: &Path,
    kernels: Option<&Path>,
    unwrap_counter: bool,
) -> minos_core::Result<Ingested> {
    let mut meta = read_meta(&meta_path(trace_path))?;
    if let Some(tdp) = g.tdp_w {
        meta.device_tdp_w = tdp;
    }
    let rows = read_trace_csv(trace_path)?;
    let opts = IngestOptions {
        unwrap_counter,
        ..IngestOptions::default()
    };
    let trace = rows.prepare(meta.device_tdp_w, opts)?;
    let magnitudes = detect_spikes(&trace);
    let utilization = match kernels {
        Some(k) => Some(aggregate_utilization(&read_kernels_csv(k)?)?),
        None => None,
    };
    Ok(Ingested {
        meta,
        trace,
        magnitudes,
        utilization,
    })
}

fn cmd_ingest(
    g: &GlobalOpts,
    trace: &Path,
    kernels: Option<&Path>,
    unwrap_counter: bool,
) -> minos_core::Result<()> {
    let ing = ingest_trace(g, trace, kernels, unwrap_counter)?;
    let c = parse_bin_width(g)?.unwrap_or(DEFAULT_BIN_WIDTH);
    let vector = build_spike_vector(&ing.magnitudes, c, ing.meta.device_tdp_w)?;
    let doc = FeatureDoc {
        workload: ing.meta.workload.clone(),
        config: ing.meta.config.clone(),
        spike_vector: SpikeVectorDoc::from(&vector),
        summary: summarize_power(&ing.trace)?,
        utilization: ing.utilization,
    };
    emit(
        g,
        &format!("{}-{}.features.json", ing.meta.workload, ing.meta.config),
        &json_string(&doc)?,
    )
}

fn cmd_cluster(
    g: &GlobalOpts,
    method: &str,
    linkage: &str,
    k: Option<usize>,
) -> minos_core::Result<()> {
    let refs = load_refset(g)?;
    match method {
        "hac" => {
            let c = parse_bin_width(g)?.unwrap_or(DEFAULT_BIN_WIDTH);
            let all = refs.materialize_vectors(c)?;
            // Zero vectors have no cosine geometry; cluster the spiky ones.
            let vectors: std::collections::BTreeMap<_, _> =
                all.into_iter().filter(|(_, v)| !v.is_zero()).collect();
            let d = hac_build(&vectors, linkage.parse::<Linkage>()?)?;
            emit(
                g,
                "dendrogram.json",
                &json_string(&DendrogramDoc::from(&d))?,
            )
        }
        "kmeans" => {
            let points = refs.utilization_points();
            let k = match k {
                Some(k) => k,
                None => silhouette_sweep(&points, 3, 17, g.seed)?.0,
            };
            let model = kmeans_fit(&points, k, g.seed)?;
            emit(g, "kmeans.json", &json_string(&model)?)
        }
        other => Err(Error::InvalidParameter(format!(
            "unknown cluster method {other:?} (expected hac or kmeans)"
        ))),
    }
}

fn cmd_refset_add(
    g: &GlobalOpts,
    trace: &Path,
    kernels: Option<&Path>,
    profile: &Path,
    largest_input: bool,
    unwrap_counter: bool,
) -> minos_core::Result<()> {
    let path = refset_path(g)?;
    let ing = ingest_trace(g, trace, kernels, unwrap_counter)?;
    let mut refs = if path.exists() {
        ReferenceSet::load(path)?
    } else {
        ReferenceSet::new(ing.meta.device_tdp_w)
    };
    if (refs.device_tdp_w - ing.meta.device_tdp_w).abs() > 1e-9 {
        return Err(Error::InvalidRecord(format!(
            "trace TDP {} W does not match reference set TDP {} W",
            ing.meta.device_tdp_w, refs.device_tdp_w
        )));
    }
    let profile: ScalingProfile = serde_json::from_str(&std::fs::read_to_string(profile)?)?;
    refs.add(
        &ing.meta.workload_id(),
        &ing.magnitudes,
        summarize_power(&ing.trace)?,
        ing.utilization,
        profile,
        largest_input,
    )?;
    refs.store(path)
}

fn cmd_refset_list(g: &GlobalOpts) -> minos_core::Result<()> {
    let refs = load_refset(g)?;
    let mut out = String::new();
    for (id, rec) in &refs.workloads {
        out.push_str(&format!(
            "{id}\tspikes={}\tlargest_input={}\n",
            rec.magnitudes_rel_tdp.len(),
            rec.largest_input
        ));
    }
    emit(g, "refset-list.txt", &out)
}

fn cmd_refset_filter(g: &GlobalOpts) -> minos_core::Result<()> {
    let path = refset_path(g)?;
    let refs = ReferenceSet::load(path)?;
    let filtered = refs.one_input_per_workload()?;
    filtered.store(path)
}

fn cmd_predict(
    g: &GlobalOpts,
    trace: &Path,
    kernels: Option<&Path>,
    unwrap_counter: bool,
) -> minos_core::Result<()> {
    let refs = load_refset(g)?;
    let ing = ingest_trace(g, trace, kernels, unwrap_counter)?;
    let target = TargetFeatures {
        workload: ing.meta.workload_id(),
        magnitudes_rel_tdp: ing.magnitudes,
        summary: summarize_power(&ing.trace)?,
        utilization: ing.utilization,
    };
    let cfg = predict_config(g)?;
    let reco = select_optimal_freq(&target, &refs, &cfg)?;
    emit(g, "prediction.json", &json_string(&reco)?)
}

fn cmd_holdout(g: &GlobalOpts) -> minos_core::Result<()> {
    let refs = load_refset(g)?;
    let cfg = predict_config(g)?;
    let report = holdout_evaluate(&refs, &cfg, &default_distance_bins(cfg.objective))?;
    emit(g, "holdout.json", &json_string(&report)?)?;
    if g.out.is_some() {
        emit(g, "holdout-pairs.csv", &holdout_csv(&report))?;
        emit(g, "holdout-histogram.csv", &histogram_csv(&report))?;
    }
    Ok(())
}

fn cmd_synth(
    g: &GlobalOpts,
    spec: Option<&Path>,
    name: &str,
    crossing_mhz: Option<u32>,
    slope_pct: f64,
    workload: &str,
) -> minos_core::Result<()> {
    if spec.is_none() && crossing_mhz.is_none() {
        return Err(Error::InvalidParameter(
            "synth needs --spec (trace) and/or --crossing-mhz (profile)".into(),
        ));
    }
    if let Some(spec_path) = spec {
        let spec: SynthSpec = serde_json::from_str(&std::fs::read_to_string(spec_path)?)?;
        let raw = synth_trace(&spec)?;
        let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir)?;
        let trace_path = dir.join(format!("{name}.csv"));
        write_trace_csv(&trace_path, &raw)?;
        let (app, config) = workload.split_once('/').unwrap_or((workload, "base"));
        write_meta(
            &meta_path(&trace_path),
            &TraceMeta {
                device_tdp_w: spec.device_tdp_w,
                workload: app.to_string(),
                config: config.to_string(),
                freq_cap_mhz: None,
            },
        )?;
    }
    if let Some(crossing) = crossing_mhz {
        let profile = synth_profile(workload, crossing, slope_pct)?;
        emit(g, &format!("{name}.profile.json"), &json_string(&profile)?)?;
    }
    Ok(())
}

fn cmd_report_cdf(g: &GlobalOpts, trace: &Path, unwrap_counter: bool) -> minos_core::Result<()> {
    let ing = ingest_trace(g, trace, None, unwrap_counter)?;
    let points = cdf_points(&ing.trace.rel_tdp())?;
    emit(g, "cdf.csv", &cdf_csv(&points))
}

fn cmd_report_scaling(g: &GlobalOpts, workload: &str) -> minos_core::Result<()> {
    let refs = load_refset(g)?;
    let rec = refs.workloads.get(workload).ok_or_else(|| {
        Error::InvalidParameter(format!("workload {workload:?} not in the reference set"))
    })?;
    emit(g, "scaling.csv", &scaling_csv(&rec.profile))
}

fn cmd_report_histogram(g: &GlobalOpts) -> minos_core::Result<()> {
    let refs = load_refset(g)?;
    let cfg = predict_config(g)?;
    let report = holdout_evaluate(&refs, &cfg, &default_distance_bins(cfg.objective))?;
    emit(g, "histogram.csv", &histogram_csv(&report))
}
