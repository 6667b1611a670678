//! Hierarchical density clustering (HDBSCAN) over the embedding space,
//! built from scratch: core distances, mutual reachability, the unique
//! canonical minimum spanning tree, the condensed hierarchy, and
//! excess-of-mass extraction. A textbook DBSCAN is included as the
//! fixed-epsilon contrast baseline.

mod condense;
mod dense;

pub use condense::{
    cluster_stability, condense_tree, extract_clusters_eom, CondensedCluster, CondensedTree,
};

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use dense::SoA;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    /// Smallest allowed cluster, in points.
    pub min_cluster_size: usize,
    /// k for the core distance (density proxy).
    pub min_samples: usize,
    /// Epsilon for the DBSCAN baseline only.
    pub dbscan_eps: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            min_cluster_size: 24,
            min_samples: 5,
            dbscan_eps: 0.25,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(Error::Config("min_cluster_size must be >= 2".into()));
        }
        if self.min_samples < 1 {
            return Err(Error::Config("min_samples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-point labels (`-1` = noise, else `0..K-1` numbered by ascending
/// first member index) plus per-cluster stability and member count.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub labels: Vec<i32>,
    pub stabilities: Vec<f64>,
    pub sizes: Vec<usize>,
}

impl ClusterResult {
    pub fn cluster_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l < 0).count()
    }

    fn all_noise(n: usize) -> ClusterResult {
        ClusterResult {
            labels: vec![-1; n],
            stabilities: Vec::new(),
            sizes: Vec::new(),
        }
    }
}

/// One edge of the mutual-reachability MST, endpoints normalized `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: u32,
    pub b: u32,
    pub weight: f64,
}

/// Distance from each point to its k-th nearest neighbor (self excluded).
/// Requires `n > k`: with self excluded there are only `n - 1` neighbors.
pub fn core_distances(points: ArrayView2<f64>, k: usize) -> Result<Vec<f64>> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::Config("min_samples must be >= 1".into()));
    }
    if n <= k {
        return Err(Error::Config(format!(
            "need more than k = {k} points for core distances, got {n}"
        )));
    }
    let soa = SoA::from_view(points);
    Ok(dense::core_distances_soa(&soa, k))
}

/// `max(core[a], core[b], ||points[a] - points[b]||)`.
pub fn mutual_reachability(a: usize, b: usize, points: ArrayView2<f64>, core: &[f64]) -> f64 {
    let mut sq = 0.0;
    for c in 0..points.ncols() {
        let diff = points[[a, c]] - points[[b, c]];
        sq += diff * diff;
    }
    sq.sqrt().max(core[a]).max(core[b])
}

/// Minimum spanning tree of the complete mutual-reachability graph. Edges
/// are totally ordered by (weight, smaller endpoint, larger endpoint), so
/// the tree is unique; the returned list is sorted by that same key.
pub fn build_mst(points: ArrayView2<f64>, core: &[f64]) -> Vec<MstEdge> {
    let mut soa = SoA::from_view(points);
    let core2: Vec<f64> = core.iter().map(|c| c * c).collect();
    dense::mst_prim_soa(&mut soa, &core2)
}

/// Full HDBSCAN: core distances, canonical MST, condensed tree,
/// excess-of-mass extraction. Fewer points than `min_cluster_size` yield
/// an all-noise result (not an error). `min_samples` is clamped to `n - 1`
/// when the input is tiny.
pub fn hdbscan(points: ArrayView2<f64>, params: &ClusterParams) -> Result<ClusterResult> {
    params.validate()?;
    let n = points.nrows();
    if n < params.min_cluster_size {
        return Ok(ClusterResult::all_noise(n));
    }
    let k = params.min_samples.min(n - 1).max(1);
    let core = core_distances(points, k)?;
    let mst = build_mst(points, &core);
    let tree = condense_tree(&mst, n, params.min_cluster_size);
    Ok(extract_clusters_eom(&tree))
}

/// Textbook DBSCAN with Euclidean eps-neighborhoods (dense O(n^2) queries;
/// this is only used as the density-contrast baseline). A point is core
/// when its eps-neighborhood, itself included, holds at least `min_pts`
/// points. Labels are renumbered by ascending first member index.
pub fn dbscan_baseline(points: ArrayView2<f64>, eps: f64, min_pts: usize) -> ClusterResult {
    let n = points.nrows();
    if n == 0 {
        return ClusterResult::all_noise(0);
    }
    let soa = SoA::from_view(points);
    const UNVISITED: i32 = -2;
    const NOISE: i32 = -1;
    let mut labels = vec![UNVISITED; n];
    let mut cluster = 0i32;
    let mut buf = Vec::new();
    let mut neigh = Vec::new();
    let mut queue = Vec::new();
    for p in 0..n {
        if labels[p] != UNVISITED {
            continue;
        }
        dense::neighbors_within(&soa, p, eps, &mut buf, &mut neigh);
        if neigh.len() < min_pts {
            labels[p] = NOISE;
            continue;
        }
        labels[p] = cluster;
        queue.clear();
        queue.extend(neigh.iter().copied());
        let mut head = 0;
        while head < queue.len() {
            let q = queue[head] as usize;
            head += 1;
            if labels[q] == NOISE {
                labels[q] = cluster; // border point
            }
            if labels[q] != UNVISITED {
                continue;
            }
            labels[q] = cluster;
            dense::neighbors_within(&soa, q, eps, &mut buf, &mut neigh);
            if neigh.len() >= min_pts {
                queue.extend(neigh.iter().copied());
            }
        }
        cluster += 1;
    }
    canonicalize_labels(labels, None)
}

/// Renumbers cluster labels by ascending first-member index and fills the
/// per-cluster sizes. Stabilities follow the renumbering when provided
/// (DBSCAN has none, so zeros are reported).
fn canonicalize_labels(raw: Vec<i32>, stabilities: Option<Vec<f64>>) -> ClusterResult {
    let mut first_seen: Vec<(usize, i32)> = Vec::new();
    for (i, &l) in raw.iter().enumerate() {
        if l >= 0 && !first_seen.iter().any(|&(_, fl)| fl == l) {
            first_seen.push((i, l));
        }
    }
    first_seen.sort_unstable();
    let k = first_seen.len();
    let max_label = raw.iter().copied().max().unwrap_or(-1).max(-1);
    let mut remap = vec![-1i32; (max_label + 1).max(0) as usize];
    for (new, &(_, old)) in first_seen.iter().enumerate() {
        remap[old as usize] = new as i32;
    }
    let mut labels = raw;
    let mut sizes = vec![0usize; k];
    for l in labels.iter_mut() {
        if *l >= 0 {
            *l = remap[*l as usize];
            sizes[*l as usize] += 1;
        }
    }
    let stabilities = match stabilities {
        Some(s) => {
            let mut out = vec![0.0; k];
            for (new, &(_, old)) in first_seen.iter().enumerate() {
                out[new] = s[old as usize];
            }
            out
        }
        None => vec![0.0; k],
    };
    ClusterResult {
        labels,
        stabilities,
        sizes,
    }
}
