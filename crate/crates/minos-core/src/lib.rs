//! Power-aware GPU workload characterization and frequency-cap
//! recommendation.
//!
//! The pipeline: raw energy/activity telemetry is differentiated and
//! filtered into a power trace ([`trace`]), summarized into a spike
//! distribution vector plus power percentiles and a kernel-utilization
//! point ([`features`]), grouped by cosine distance or 2-D K-means
//! ([`cluster`]), and matched against a stored reference corpus of profiled
//! workloads ([`refset`]) to recommend a frequency cap that keeps power
//! under a bound or performance loss within one ([`predict`]). [`synth`]
//! generates traces and scaling profiles with construction-time ground
//! truth, and [`fixtures`] assembles reference corpora with known expected
//! outcomes.

pub mod cluster;
pub mod error;
pub mod features;
pub mod fixtures;
pub mod formats;
pub mod predict;
pub mod refset;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
