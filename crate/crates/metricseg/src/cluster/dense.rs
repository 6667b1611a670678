//! Dense O(n^2) kernels for core distances and the mutual-reachability
//! minimum spanning tree. Points are held column-major (one slice per
//! dimension) so the per-dimension inner loops vectorize; all comparisons
//! use a strict total order on edges, which makes the MST unique and the
//! output independent of block sizes or visit order.

use ndarray::ArrayView2;

use super::MstEdge;

const BLOCK: usize = 4096;

/// Column-major point storage.
pub(super) struct SoA {
    pub n: usize,
    pub d: usize,
    cols: Vec<Vec<f64>>,
}

impl SoA {
    pub fn from_view(points: ArrayView2<f64>) -> SoA {
        let (n, d) = points.dim();
        let mut cols = vec![vec![0.0; n]; d];
        for (i, row) in points.rows().into_iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                cols[k][i] = v;
            }
        }
        SoA { n, d, cols }
    }

    /// Squared distances from point `q` to points `lo..lo+out.len()`.
    fn sq_dist_block(&self, q: usize, lo: usize, out: &mut [f64]) {
        let m = out.len();
        {
            let col = &self.cols[0][lo..lo + m];
            let qv = self.cols[0][q];
            for (o, &c) in out.iter_mut().zip(col) {
                let diff = c - qv;
                *o = diff * diff;
            }
        }
        for k in 1..self.d {
            let col = &self.cols[k][lo..lo + m];
            let qv = self.cols[k][q];
            for (o, &c) in out.iter_mut().zip(col) {
                let diff = c - qv;
                *o += diff * diff;
            }
        }
    }

    pub fn sq_dist(&self, a: usize, b: usize) -> f64 {
        let mut sq = 0.0;
        for k in 0..self.d {
            let diff = self.cols[k][a] - self.cols[k][b];
            sq += diff * diff;
        }
        sq
    }

    fn swap(&mut self, a: usize, b: usize) {
        for col in self.cols.iter_mut() {
            col.swap(a, b);
        }
    }

    fn truncate(&mut self, len: usize) {
        for col in self.cols.iter_mut() {
            col.truncate(len);
        }
    }
}

/// Fixed-capacity set of the k smallest values seen, tracking their max.
struct KSmallest {
    values: Vec<f64>,
    k: usize,
    worst: f64,
}

impl KSmallest {
    fn new(k: usize) -> Self {
        KSmallest {
            values: Vec::with_capacity(k),
            k,
            worst: f64::INFINITY,
        }
    }

    #[inline]
    fn offer(&mut self, v: f64) {
        if self.values.len() < self.k {
            self.values.push(v);
            if self.values.len() == self.k {
                self.worst = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
            return;
        }
        if v >= self.worst {
            return;
        }
        let mut max_idx = 0;
        let mut max_val = self.values[0];
        for (i, &x) in self.values.iter().enumerate().skip(1) {
            if x > max_val {
                max_val = x;
                max_idx = i;
            }
        }
        self.values[max_idx] = v;
        self.worst = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
}

/// Exact k-th-nearest-neighbor distances (self excluded) by a symmetric
/// pairwise scan. Requires `n > k`.
pub(super) fn core_distances_soa(soa: &SoA, k: usize) -> Vec<f64> {
    let n = soa.n;
    let mut sets: Vec<KSmallest> = (0..n).map(|_| KSmallest::new(k)).collect();
    let mut buf = vec![0.0f64; BLOCK.min(n)];
    for i in 0..n {
        let mut j = i + 1;
        while j < n {
            let len = BLOCK.min(n - j);
            let block = &mut buf[..len];
            soa.sq_dist_block(i, j, block);
            for (t, &d2) in block.iter().enumerate() {
                // `worst` is infinite until a set holds k values, so the
                // cheap compare also covers the fill phase.
                if d2 < sets[i].worst {
                    sets[i].offer(d2);
                }
                let set_j = &mut sets[j + t];
                if d2 < set_j.worst {
                    set_j.offer(d2);
                }
            }
            j += len;
        }
    }
    sets.into_iter().map(|s| s.worst.sqrt()).collect()
}

/// Compares edge keys under the total order (weight, min endpoint, max
/// endpoint); weights may be squared on both sides since squaring is
/// monotone on non-negative values.
#[inline]
fn edge_key_less(w_a: f64, a0: u32, a1: u32, w_b: f64, b0: u32, b1: u32) -> bool {
    if w_a != w_b {
        return w_a < w_b;
    }
    let (amin, amax) = if a0 < a1 { (a0, a1) } else { (a1, a0) };
    let (bmin, bmax) = if b0 < b1 { (b0, b1) } else { (b1, b0) };
    (amin, amax) < (bmin, bmax)
}

/// Prim's algorithm over the complete mutual-reachability graph under the
/// total edge order, producing the unique minimum spanning tree. Points
/// already added to the tree are swap-removed so the candidate scan stays
/// contiguous; `core2` are squared core distances indexed like `soa`.
pub(super) fn mst_prim_soa(soa: &mut SoA, core2: &[f64]) -> Vec<MstEdge> {
    let n = soa.n;
    if n < 2 {
        return Vec::new();
    }
    // Parallel arrays over the active (not yet in tree) suffix.
    let mut orig: Vec<u32> = (0..n as u32).collect();
    let mut core2a: Vec<f64> = core2.to_vec();
    let mut best2: Vec<f64> = vec![f64::INFINITY; n];
    let mut best_from: Vec<u32> = vec![0; n];

    // Move point 0 out of the active set by swapping it to the end and
    // shrinking; the "current" point lives implicitly in `cur_*`.
    let mut active = n;
    let swap_out = |soa: &mut SoA,
                    orig: &mut Vec<u32>,
                    core2a: &mut Vec<f64>,
                    best2: &mut Vec<f64>,
                    best_from: &mut Vec<u32>,
                    active: &mut usize,
                    idx: usize| {
        let last = *active - 1;
        soa.swap(idx, last);
        orig.swap(idx, last);
        core2a.swap(idx, last);
        best2.swap(idx, last);
        best_from.swap(idx, last);
        *active = last;
    };

    let mut edges = Vec::with_capacity(n - 1);
    let mut cur_idx = 0usize;
    let mut buf = vec![0.0f64; BLOCK.min(n)];
    for _ in 0..n - 1 {
        let cur_orig = orig[cur_idx];
        let cur_core2 = core2a[cur_idx];
        // Keep the current point's coordinates addressable: swap it to the
        // tail first, then scan the remaining prefix against the tail slot.
        swap_out(
            soa,
            &mut orig,
            &mut core2a,
            &mut best2,
            &mut best_from,
            &mut active,
            cur_idx,
        );
        let q = active; // the just-removed point sits at this slot

        let mut arg = 0usize;
        let mut arg_w = f64::INFINITY;
        let mut lo = 0usize;
        while lo < active {
            let len = BLOCK.min(active - lo);
            let block = &mut buf[..len];
            soa.sq_dist_block(q, lo, block);
            for (t, &d2) in block.iter().enumerate() {
                let j = lo + t;
                let m2 = d2.max(cur_core2).max(core2a[j]);
                if m2 < best2[j] {
                    best2[j] = m2;
                    best_from[j] = cur_orig;
                } else if m2 == best2[j]
                    && edge_key_less(m2, cur_orig, orig[j], best2[j], best_from[j], orig[j])
                {
                    best_from[j] = cur_orig;
                }
            }
            for t in 0..len {
                let j = lo + t;
                if best2[j] < arg_w
                    || (best2[j] == arg_w
                        && edge_key_less(
                            best2[j],
                            best_from[j],
                            orig[j],
                            arg_w,
                            best_from[arg],
                            orig[arg],
                        ))
                {
                    arg_w = best2[j];
                    arg = j;
                }
            }
            lo += len;
        }
        let (a, b) = (best_from[arg], orig[arg]);
        edges.push(MstEdge {
            a: a.min(b),
            b: a.max(b),
            weight: best2[arg].sqrt(),
        });
        cur_idx = arg;
    }
    soa.truncate(0);
    edges.sort_unstable_by(|x, y| {
        x.weight
            .partial_cmp(&y.weight)
            .unwrap()
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    edges
}

/// Indices of all points within `eps` of `q` (self included).
pub(super) fn neighbors_within(soa: &SoA, q: usize, eps: f64, buf: &mut Vec<f64>, out: &mut Vec<u32>) {
    out.clear();
    let eps2 = eps * eps;
    let n = soa.n;
    buf.resize(BLOCK.min(n), 0.0);
    let mut lo = 0usize;
    while lo < n {
        let len = BLOCK.min(n - lo);
        let block = &mut buf[..len];
        soa.sq_dist_block(q, lo, block);
        for (t, &d2) in block.iter().enumerate() {
            if d2 <= eps2 {
                out.push((lo + t) as u32);
            }
        }
        lo += len;
    }
}
