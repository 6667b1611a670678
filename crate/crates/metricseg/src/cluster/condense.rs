//! Single-linkage hierarchy, the condensed tree, and excess-of-mass
//! cluster extraction.

use super::{ClusterResult, MstEdge};

/// Single-linkage merge tree built from MST edges in ascending canonical
/// order. Nodes `0..n` are points; node `n+i` is the merge made by edge `i`.
struct MergeTree {
    n: usize,
    left: Vec<u32>,
    right: Vec<u32>,
    dist: Vec<f64>,
    size: Vec<u32>,
}

impl MergeTree {
    fn build(n: usize, edges: &[MstEdge]) -> MergeTree {
        assert_eq!(edges.len(), n.saturating_sub(1));
        let total = n + edges.len();
        // Union-find over tree nodes:每 component points at its current
        // top merge node.
        let mut parent: Vec<u32> = (0..total as u32).collect();
        fn find(parent: &mut [u32], mut x: u32) -> u32 {
            while parent[x as usize] != x {
                let up = parent[parent[x as usize] as usize];
                parent[x as usize] = up;
                x = up;
            }
            x
        }
        let mut left = Vec::with_capacity(edges.len());
        let mut right = Vec::with_capacity(edges.len());
        let mut dist = Vec::with_capacity(edges.len());
        let mut size = vec![1u32; total];
        for (i, e) in edges.iter().enumerate() {
            let node = (n + i) as u32;
            let a = find(&mut parent, e.a);
            let b = find(&mut parent, e.b);
            debug_assert_ne!(a, b, "edge list is not a spanning tree");
            left.push(a);
            right.push(b);
            dist.push(e.weight);
            size[node as usize] = size[a as usize] + size[b as usize];
            parent[a as usize] = node;
            parent[b as usize] = node;
        }
        MergeTree {
            n,
            left,
            right,
            dist,
            size,
        }
    }

    fn node_size(&self, node: u32) -> usize {
        self.size[node as usize] as usize
    }

    /// All point ids under `node`.
    fn collect_points(&self, node: u32, out: &mut Vec<u32>) {
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if (x as usize) < self.n {
                out.push(x);
            } else {
                let i = x as usize - self.n;
                stack.push(self.left[i]);
                stack.push(self.right[i]);
            }
        }
    }
}

/// One condensed cluster: where it was born (lambda = 1/distance), which
/// points fell out of it and when, and its cluster children.
#[derive(Debug, Clone)]
pub struct CondensedCluster {
    pub parent: Option<u32>,
    pub birth_lambda: f64,
    /// `(point, lambda)` pairs: the density level at which the point left.
    pub fallout: Vec<(u32, f64)>,
    pub children: Vec<u32>,
    /// Point count of the cluster at birth.
    pub size: usize,
}

/// Condensed hierarchy: cluster 0 is the root (born at lambda 0).
#[derive(Debug, Clone)]
pub struct CondensedTree {
    pub point_count: usize,
    pub min_cluster_size: usize,
    pub clusters: Vec<CondensedCluster>,
}

fn lambda_of(dist: f64) -> f64 {
    if dist > 0.0 {
        1.0 / dist
    } else {
        f64::INFINITY
    }
}

/// Condenses the single-linkage dendrogram of `edges` (an MST over `n`
/// points): splits where both sides hold at least `min_cluster_size`
/// points create child clusters; smaller sides fall out of the current
/// cluster at the split's lambda.
pub fn condense_tree(edges: &[MstEdge], n: usize, min_cluster_size: usize) -> CondensedTree {
    let mcs = min_cluster_size.max(2);
    let mut clusters = vec![CondensedCluster {
        parent: None,
        birth_lambda: 0.0,
        fallout: Vec::new(),
        children: Vec::new(),
        size: n,
    }];
    if n == 0 {
        return CondensedTree {
            point_count: 0,
            min_cluster_size: mcs,
            clusters,
        };
    }
    if n == 1 {
        clusters[0].fallout.push((0, f64::INFINITY));
        return CondensedTree {
            point_count: 1,
            min_cluster_size: mcs,
            clusters,
        };
    }

    let mut sorted: Vec<MstEdge> = edges.to_vec();
    sorted.sort_unstable_by(|x, y| {
        x.weight
            .partial_cmp(&y.weight)
            .unwrap()
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    let tree = MergeTree::build(n, &sorted);

    let root_node = (n + sorted.len() - 1) as u32;
    let mut points_buf = Vec::new();
    // (merge node, condensed cluster owning it)
    let mut stack: Vec<(u32, u32)> = vec![(root_node, 0)];
    while let Some((node, cid)) = stack.pop() {
        let i = node as usize - tree.n;
        let lambda = lambda_of(tree.dist[i]);
        let (l, r) = (tree.left[i], tree.right[i]);
        let big_l = tree.node_size(l) >= mcs;
        let big_r = tree.node_size(r) >= mcs;
        match (big_l, big_r) {
            (true, true) => {
                for child_node in [l, r] {
                    let child_id = clusters.len() as u32;
                    clusters[cid as usize].children.push(child_id);
                    clusters.push(CondensedCluster {
                        parent: Some(cid),
                        birth_lambda: lambda,
                        fallout: Vec::new(),
                        children: Vec::new(),
                        size: tree.node_size(child_node),
                    });
                    stack.push((child_node, child_id));
                }
            }
            (true, false) => {
                points_buf.clear();
                tree.collect_points(r, &mut points_buf);
                let c = &mut clusters[cid as usize];
                c.fallout.extend(points_buf.iter().map(|&p| (p, lambda)));
                stack.push((l, cid));
            }
            (false, true) => {
                points_buf.clear();
                tree.collect_points(l, &mut points_buf);
                let c = &mut clusters[cid as usize];
                c.fallout.extend(points_buf.iter().map(|&p| (p, lambda)));
                stack.push((r, cid));
            }
            (false, false) => {
                points_buf.clear();
                tree.collect_points(l, &mut points_buf);
                tree.collect_points(r, &mut points_buf);
                let c = &mut clusters[cid as usize];
                c.fallout.extend(points_buf.iter().map(|&p| (p, lambda)));
            }
        }
    }
    CondensedTree {
        point_count: n,
        min_cluster_size: mcs,
        clusters,
    }
}

/// Excess-of-mass stability: sum over the cluster's points of
/// `lambda_leave - lambda_birth`, where points leave via fallout or when
/// the cluster splits into its children.
pub fn cluster_stability(tree: &CondensedTree, cid: usize) -> f64 {
    let c = &tree.clusters[cid];
    let mut s: f64 = c.fallout.iter().map(|&(_, l)| l - c.birth_lambda).sum();
    for &child in &c.children {
        let child = &tree.clusters[child as usize];
        s += child.size as f64 * (child.birth_lambda - c.birth_lambda);
    }
    s
}

/// Selects the non-overlapping cluster set maximizing total stability with
/// the bottom-up rule: a parent is selected iff its stability exceeds the
/// summed stability of its selected descendants. Unselected points are
/// noise. Cluster labels are renumbered by ascending first member index.
pub fn extract_clusters_eom(tree: &CondensedTree) -> ClusterResult {
    let m = tree.clusters.len();
    let n = tree.point_count;
    if n == 0 {
        return ClusterResult {
            labels: Vec::new(),
            stabilities: Vec::new(),
            sizes: Vec::new(),
        };
    }
    let mut selected = vec![false; m];
    let mut subtree_stability = vec![0.0f64; m];
    // Children always have larger ids than their parent.
    for cid in (0..m).rev() {
        let own = cluster_stability(tree, cid);
        let child_sum: f64 = tree.clusters[cid]
            .children
            .iter()
            .map(|&ch| subtree_stability[ch as usize])
            .sum();
        if own > child_sum {
            selected[cid] = true;
            subtree_stability[cid] = own;
        } else {
            subtree_stability[cid] = child_sum;
        }
    }
    // Drop descendants of selected ancestors (parents have smaller ids).
    let mut covered = vec![false; m];
    for cid in 0..m {
        if let Some(parent) = tree.clusters[cid].parent {
            if covered[parent as usize] || selected[parent as usize] {
                covered[cid] = true;
                selected[cid] = false;
            }
        }
    }

    // Members of a selected cluster: every fallout in its condensed subtree.
    let mut labels = vec![-1i32; n];
    let mut picked: Vec<(u32, u32, f64)> = Vec::new(); // (min member, cid, stability)
    for cid in 0..m {
        if !selected[cid] {
            continue;
        }
        let mut members = Vec::new();
        let mut stack = vec![cid as u32];
        while let Some(c) = stack.pop() {
            let cl = &tree.clusters[c as usize];
            members.extend(cl.fallout.iter().map(|&(p, _)| p));
            stack.extend(cl.children.iter().copied());
        }
        debug_assert!(!members.is_empty());
        let min_member = members.iter().copied().min().unwrap();
        picked.push((min_member, cid as u32, cluster_stability(tree, cid)));
        for &p in &members {
            // Temporarily mark with the cluster id; renumbered below.
            labels[p as usize] = cid as i32;
        }
    }
    picked.sort_unstable_by_key(|&(min_member, cid, _)| (min_member, cid));
    let mut remap = vec![-1i32; m];
    let mut stabilities = Vec::with_capacity(picked.len());
    let mut sizes = vec![0usize; picked.len()];
    for (new_label, &(_, cid, stab)) in picked.iter().enumerate() {
        remap[cid as usize] = new_label as i32;
        stabilities.push(stab);
    }
    for l in labels.iter_mut() {
        if *l >= 0 {
            *l = remap[*l as usize];
            sizes[*l as usize] += 1;
        }
    }
    ClusterResult {
        labels,
        stabilities,
        sizes,
    }
}
