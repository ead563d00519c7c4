//! Workload grouping: agglomerative clustering of spike vectors under
//! cosine distance, 2-D K-means over utilization with silhouette-driven
//! model selection, and nearest-neighbor queries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{SpikeVector, UtilizationPoint};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Cosine distance between raw non-negative vectors: `1 - a.b/(|a||b|)`.
pub fn cosine_distance_raw(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let d = 1.0 - dot / (na.sqrt() * nb.sqrt());
    d.max(0.0)
}

/// Cosine distance between two spike vectors with identical binning.
pub fn cosine_distance(a: &SpikeVector, b: &SpikeVector) -> Result<f64> {
    if (a.bin_width - b.bin_width).abs() > 1e-12 || a.values.len() != b.values.len() {
        return Err(Error::IncompatibleVectors(format!(
            "bin width {} x {} / {} x {} bins",
            a.bin_width,
            a.values.len(),
            b.bin_width,
            b.values.len()
        )));
    }
    if a.is_zero() {
        return Err(Error::ZeroVector("lhs".into()));
    }
    if b.is_zero() {
        return Err(Error::ZeroVector("rhs".into()));
    }
    Ok(cosine_distance_raw(&a.values, &b.values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Ward,
    Average,
    Complete,
}

impl std::str::FromStr for Linkage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ward" => Ok(Linkage::Ward),
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            other => Err(Error::InvalidParameter(format!("unknown linkage {other}"))),
        }
    }
}

/// One agglomeration step. Node ids: `0..N` are leaves; `N + i` is the
/// cluster created by merge `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

/// Stepwise dendrogram over cosine distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: Vec<String>,
    pub merges: Vec<Merge>,
    pub linkage: Linkage,
}

/// Condensed pairwise cosine distance matrix for the given vectors,
/// in input order.
pub fn pairwise_cosine_seq(vectors: &[&SpikeVector]) -> Result<Vec<Vec<f64>>> {
    let n = vectors.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = cosine_distance(vectors[i], vectors[j])?;
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    Ok(m)
}

#[cfg(feature = "parallel")]
pub fn pairwise_cosine_par(vectors: &[&SpikeVector]) -> Result<Vec<Vec<f64>>> {
    let n = vectors.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Ok(0.0)
                    } else {
                        cosine_distance(vectors[i], vectors[j])
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(rows)
}

fn pairwise_cosine(vectors: &[&SpikeVector]) -> Result<Vec<Vec<f64>>> {
    #[cfg(feature = "parallel")]
    {
        pairwise_cosine_par(vectors)
    }
    #[cfg(not(feature = "parallel"))]
    {
        pairwise_cosine_seq(vectors)
    }
}

/// Lance-Williams update for the distance from the freshly merged cluster
/// `(i, j)` to `k`. Ward is applied to the cosine matrix as configured,
/// even though it formally assumes Euclidean geometry.
fn lance_williams(
    linkage: Linkage,
    d_ik: f64,
    d_jk: f64,
    d_ij: f64,
    n_i: f64,
    n_j: f64,
    n_k: f64,
) -> f64 {
    match linkage {
        Linkage::Average => (n_i * d_ik + n_j * d_jk) / (n_i + n_j),
        Linkage::Complete => d_ik.max(d_jk),
        Linkage::Ward => {
            let t = n_i + n_j + n_k;
            (((n_i + n_k) * d_ik * d_ik + (n_j + n_k) * d_jk * d_jk - n_k * d_ij * d_ij) / t)
                .max(0.0)
                .sqrt()
        }
    }
}

/// Agglomerative clustering over spike vectors.
///
/// Deterministic: leaves are ordered by workload id, and ties on the minimal
/// pairwise linkage break toward the lexicographically smaller (a, b) node
/// pair by creation order.
pub fn hac_build(vectors: &BTreeMap<String, SpikeVector>, linkage: Linkage) -> Result<Dendrogram> {
    if vectors.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "clustering needs >= 2 workloads, got {}",
            vectors.len()
        )));
    }
    let leaves: Vec<String> = vectors.keys().cloned().collect();
    let vecs: Vec<&SpikeVector> = vectors.values().collect();
    let n = leaves.len();
    let base = pairwise_cosine(&vecs)?;

    // Active clusters keyed by node id; dist is indexed by position in
    // `active`.
    let mut active: Vec<usize> = (0..n).collect();
    let mut sizes: Vec<f64> = vec![1.0; n];
    let mut dist = base;
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..(n - 1) {
        let mut best = (0usize, 1usize);
        let mut best_d = f64::INFINITY;
        for i in 0..active.len() {
            for j in (i + 1)..active.len() {
                let d = dist[i][j];
                let better = d < best_d
                    || (d == best_d && (active[i], active[j]) < (active[best.0], active[best.1]));
                if better {
                    best = (i, j);
                    best_d = d;
                }
            }
        }
        let (i, j) = best;
        let (id_i, id_j) = (active[i], active[j]);
        let (n_i, n_j) = (sizes[id_i], sizes[id_j]);
        let new_id = n + step;
        merges.push(Merge {
            a: id_i,
            b: id_j,
            distance: best_d,
        });
        sizes.push(n_i + n_j);

        // Row for the merged cluster, then drop rows i and j.
        let merged_row: Vec<f64> = (0..active.len())
            .filter(|&k| k != i && k != j)
            .map(|k| {
                lance_williams(
                    linkage,
                    dist[i][k],
                    dist[j][k],
                    best_d,
                    n_i,
                    n_j,
                    sizes[active[k]],
                )
            })
            .collect();
        let keep: Vec<usize> = (0..active.len()).filter(|&k| k != i && k != j).collect();
        let mut next = vec![vec![0.0; keep.len() + 1]; keep.len() + 1];
        for (a, &ka) in keep.iter().enumerate() {
            for (b, &kb) in keep.iter().enumerate() {
                next[a][b] = dist[ka][kb];
            }
            next[a][keep.len()] = merged_row[a];
            next[keep.len()][a] = merged_row[a];
        }
        dist = next;
        active = keep.iter().map(|&k| active[k]).collect();
        active.push(new_id);
    }

    Ok(Dendrogram {
        leaves,
        merges,
        linkage,
    })
}

/// Flat classes from a dendrogram: connected components after removing
/// merges with distance above the threshold. Labels are dense indices in
/// leaf order.
pub fn slice_dendrogram(d: &Dendrogram, threshold: f64) -> BTreeMap<String, usize> {
    let n = d.leaves.len();
    let total = n + d.merges.len();
    let mut parent: Vec<usize> = (0..total).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, m) in d.merges.iter().enumerate() {
        let node = n + i;
        if m.distance <= threshold {
            let ra = find(&mut parent, m.a);
            let rb = find(&mut parent, m.b);
            parent[ra] = node;
            parent[rb] = node;
        }
    }
    let mut label_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for (leaf, name) in d.leaves.iter().enumerate() {
        let root = find(&mut parent, leaf);
        let next = label_of_root.len();
        let label = *label_of_root.entry(root).or_insert(next);
        out.insert(name.clone(), label);
    }
    out
}

/// Fitted 2-D K-means model over utilization points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub seed: u64,
    pub centroids: Vec<[f64; 2]>,
    pub assignments: BTreeMap<String, usize>,
    pub silhouette: f64,
}

const KMEANS_MAX_ITERS: usize = 300;

fn point_xy(p: &UtilizationPoint) -> [f64; 2] {
    [p.app_sm_util, p.app_dram_util]
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Lloyd's algorithm with deterministic farthest-point initialization:
/// the seed picks the first center, each next center maximizes the minimal
/// distance to those already chosen.
pub fn kmeans_fit(
    points: &BTreeMap<String, UtilizationPoint>,
    k: usize,
    seed: u64,
) -> Result<KMeansModel> {
    kmeans_fit_history(points, k, seed).map(|(m, _)| m)
}

/// As [`kmeans_fit`], additionally returning the within-cluster sum of
/// squares after each Lloyd iteration (non-increasing absent empty-cluster
/// reseeds).
pub fn kmeans_fit_history(
    points: &BTreeMap<String, UtilizationPoint>,
    k: usize,
    seed: u64,
) -> Result<(KMeansModel, Vec<f64>)> {
    use rand::{Rng, SeedableRng};
    let n = points.len();
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds the number of points ({n})"
        )));
    }
    let ids: Vec<&String> = points.keys().collect();
    let xs: Vec<[f64; 2]> = points.values().map(point_xy).collect();

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![xs[rng.gen_range(0..n)]];
    while centers.len() < k {
        let (best, _) = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let d = centers
                    .iter()
                    .map(|&c| sq_dist(x, c))
                    .fold(f64::INFINITY, f64::min);
                (i, d)
            })
            .fold((0, f64::NEG_INFINITY), |acc, cur| {
                if cur.1 > acc.1 {
                    cur
                } else {
                    acc
                }
            });
        centers.push(xs[best]);
    }

    let mut assign = vec![0usize; n];
    let mut history = Vec::new();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, &x) in xs.iter().enumerate() {
            let (best, _) = centers
                .iter()
                .enumerate()
                .map(|(c, &ctr)| (c, sq_dist(x, ctr)))
                .fold(
                    (0, f64::INFINITY),
                    |acc, cur| {
                        if cur.1 < acc.1 {
                            cur
                        } else {
                            acc
                        }
                    },
                );
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (i, &x) in xs.iter().enumerate() {
            sums[assign[i]][0] += x[0];
            sums[assign[i]][1] += x[1];
            counts[assign[i]] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed an empty cluster with the point farthest from its
                // current centroid.
                let (far, _) = xs
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| (i, sq_dist(x, centers[assign[i]])))
                    .fold((0, f64::NEG_INFINITY), |acc, cur| {
                        if cur.1 > acc.1 {
                            cur
                        } else {
                            acc
                        }
                    });
                centers[c] = xs[far];
                assign[far] = c;
            } else {
                centers[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            }
        }
        history.push(kmeans_objective(&xs, &assign, &centers));
        if !changed {
            break;
        }
    }

    let sil = silhouette_score(&xs, &assign, k);
    let model = KMeansModel {
        k,
        seed,
        centroids: centers,
        assignments: ids
            .into_iter()
            .zip(assign.iter())
            .map(|(id, &c)| (id.clone(), c))
            .collect(),
        silhouette: sil,
    };
    Ok((model, history))
}

/// Within-cluster sum of squares of a fitted assignment.
pub fn kmeans_objective(points: &[[f64; 2]], assign: &[usize], centers: &[[f64; 2]]) -> f64 {
    points
        .iter()
        .zip(assign)
        .map(|(&x, &c)| sq_dist(x, centers[c]))
        .sum()
}

/// Mean sample silhouette. Samples in singleton clusters score 0; all
/// clusters singleton (k = n) scores 0.
pub fn silhouette_score(xs: &[[f64; 2]], assign: &[usize], k: usize) -> f64 {
    let n = xs.len();
    if k < 2 || k >= n {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = assign[i];
        let own_size = assign.iter().filter(|&&c| c == own).count();
        if own_size <= 1 {
            continue; // s = 0 by convention
        }
        let mut a = 0.0;
        let mut b = f64::INFINITY;
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&j| assign[j] == c && j != i).collect();
            if members.is_empty() {
                continue;
            }
            let mean: f64 = members
                .iter()
                .map(|&j| sq_dist(xs[i], xs[j]).sqrt())
                .sum::<f64>()
                / members.len() as f64;
            if c == own {
                a = mean;
            } else {
                b = b.min(mean);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// Sweep K over `[k_min, min(k_max, n - 1)]`, fitting K-means at each K and
/// returning the K with the highest mean silhouette (ties toward smaller K).
pub fn silhouette_sweep(
    points: &BTreeMap<String, UtilizationPoint>,
    k_min: usize,
    k_max: usize,
    seed: u64,
) -> Result<(usize, Vec<(usize, f64)>)> {
    let n = points.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "silhouette sweep needs >= 4 points, got {n}"
        )));
    }
    let hi = k_max.min(n - 1);
    let lo = k_min.max(2);
    if lo > hi {
        return Err(Error::InsufficientData(format!(
            "no valid k in [{k_min}, {k_max}] for {n} points"
        )));
    }
    let mut scores = Vec::new();
    let mut best = (lo, f64::NEG_INFINITY);
    for k in lo..=hi {
        let model = kmeans_fit(points, k, seed)?;
        scores.push((k, model.silhouette));
        if model.silhouette > best.1 {
            best = (k, model.silhouette);
        }
    }
    Ok((best.0, scores))
}

/// Nearest-neighbor query result. Ties break toward the lexicographically
/// smallest workload id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborResult {
    pub id: String,
    pub distance: f64,
}

/// Arg-min cosine distance over the reference vectors. Zero reference
/// vectors (no-spike workloads) are skipped.
pub fn nearest_power_neighbor(
    query: &SpikeVector,
    refs: &BTreeMap<String, SpikeVector>,
) -> Result<NeighborResult> {
    if refs.is_empty() {
        return Err(Error::InsufficientData("empty reference set".into()));
    }
    if query.is_zero() {
        return Err(Error::ZeroVector("query".into()));
    }
    let mut best: Option<NeighborResult> = None;
    for (id, v) in refs {
        if v.is_zero() {
            continue;
        }
        let d = cosine_distance(query, v)?;
        if best.as_ref().is_none_or(|b| d < b.distance) {
            best = Some(NeighborResult {
                id: id.clone(),
                distance: d,
            });
        }
    }
    best.ok_or_else(|| Error::InsufficientData("all reference vectors are zero".into()))
}

/// Arg-min Euclidean distance over the reference utilization points.
pub fn nearest_util_neighbor(
    query: &UtilizationPoint,
    refs: &BTreeMap<String, UtilizationPoint>,
) -> Result<NeighborResult> {
    if refs.is_empty() {
        return Err(Error::InsufficientData("empty reference set".into()));
    }
    let mut best: Option<NeighborResult> = None;
    for (id, p) in refs {
        let d = query.euclidean_distance(p);
        if best.as_ref().is_none_or(|b| d < b.distance) {
            best = Some(NeighborResult {
                id: id.clone(),
                distance: d,
            });
        }
    }
    Ok(best.unwrap())
}
