//! Discriminative metric-learning loss and its analytic gradients.
//!
//! Naming follows the source formulation, which inverts common usage:
//! `L_intra` acts *between* instances (it pushes instance means apart until
//! `2*delta_intra`), while `L_inter` acts *within* one instance (it pulls
//! embeddings to their instance mean beyond a margin `delta_inter`). The
//! per-instance pull terms are combined with weights `|E_i|^p / sum |E_j|^p`:
//! `p = 0` weights instances equally, `p = 1` weights points equally.
//!
//! There is no regularization term: the total is exactly
//! `L_inter + gamma_intra * L_intra`.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub delta_inter: f64,
    pub delta_intra: f64,
    pub gamma_intra: f64,
    /// Instance-size weighting exponent, in `[0, 1]`.
    pub p: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            delta_inter: 0.1,
            delta_intra: 0.5,
            gamma_intra: 10.0,
            p: 1.0,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_inter >= 0.0 && self.delta_intra >= 0.0 && self.gamma_intra >= 0.0) {
            return Err(Error::Config("loss margins and gamma must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("p = {} not in [0, 1]", self.p)));
        }
        // Required for the separation guarantee 2*delta_intra - 2*delta_inter > 0.
        if !(self.delta_intra > self.delta_inter) {
            return Err(Error::Config(format!(
                "need delta_intra ({}) > delta_inter ({})",
                self.delta_intra, self.delta_inter
            )));
        }
        Ok(())
    }
}

/// Partition of (a subset of) embedding rows into instances. Instances are
/// kept in ascending label order; background rows are simply not listed.
#[derive(Debug, Clone)]
pub struct InstancePartition {
    groups: Vec<Vec<usize>>,
}

impl InstancePartition {
    /// Builds a partition from explicit member lists. Every group must be
    /// non-empty.
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (id, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::EmptyInstance { id: id as u32 });
            }
        }
        Ok(InstancePartition { groups })
    }

    /// Groups rows by label; `None` rows (background) are excluded.
    pub fn from_labels(labels: &[Option<u32>]) -> Result<Self> {
        let mut by_id: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
        for (row, lab) in labels.iter().enumerate() {
            if let Some(id) = lab {
                by_id.entry(*id).or_default().push(row);
            }
        }
        Self::new(by_id.into_values().collect())
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn instance_count(&self) -> usize {
        self.groups.len()
    }

    pub fn labeled_count(&self) -> usize {
        self.groups.iter().map(|g| g.len()).sum()
    }
}

/// `mu_i`: arithmetic mean of the embeddings of each instance.
pub fn instance_means(embeddings: ArrayView2<f64>, partition: &InstancePartition) -> Result<Array2<f64>> {
    let d = embeddings.ncols();
    let mut means = Array2::zeros((partition.instance_count(), d));
    for (i, group) in partition.groups().iter().enumerate() {
        for &k in group {
            if k >= embeddings.nrows() {
                return Err(Error::ShapeMismatch {
                    expected: format!("row index < {}", embeddings.nrows()),
                    actual: format!("{k}"),
                });
            }
            for c in 0..d {
                means[[i, c]] += embeddings[[k, c]];
            }
        }
        let inv = 1.0 / group.len() as f64;
        for c in 0..d {
            means[[i, c]] *= inv;
        }
    }
    Ok(means)
}

fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

/// Size-normalized instance weights `|E_i|^p / sum_j |E_j|^p`.
fn instance_weights(partition: &InstancePartition, p: f64) -> Vec<f64> {
    let raw: Vec<f64> = partition
        .groups()
        .iter()
        .map(|g| (g.len() as f64).powf(p))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Attractive term: weighted average over instances of the mean hinged
/// distance of members to their instance mean.
pub fn inter_loss(
    embeddings: ArrayView2<f64>,
    partition: &InstancePartition,
    params: &LossParams,
) -> Result<f64> {
    let means = instance_means(embeddings, partition)?;
    let weights = instance_weights(partition, params.p);
    let d = embeddings.ncols();
    let mut total = 0.0;
    for (i, group) in partition.groups().iter().enumerate() {
        let mut l_i = 0.0;
        for &k in group {
            let mut sq = 0.0;
            for c in 0..d {
                let diff = means[[i, c]] - embeddings[[k, c]];
                sq += diff * diff;
            }
            l_i += hinge(sq.sqrt() - params.delta_inter);
        }
        l_i /= group.len() as f64;
        total += weights[i] * l_i;
    }
    Ok(total / partition.instance_count() as f64)
}

/// Repulsive term over ordered pairs of instance means. Defined as 0 for a
/// single instance (no pair exists to repel).
pub fn intra_loss(means: ArrayView2<f64>, params: &LossParams) -> f64 {
    let m = means.nrows();
    if m < 2 {
        return 0.0;
    }
    let d = means.ncols();
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let mut sq = 0.0;
            for c in 0..d {
                let diff = means[[i, c]] - means[[j, c]];
                sq += diff * diff;
            }
            total += hinge(2.0 * params.delta_intra - sq.sqrt());
        }
    }
    total / (m * (m - 1)) as f64
}

/// `L = L_inter + gamma_intra * L_intra`.
pub fn total_loss(
    embeddings: ArrayView2<f64>,
    partition: &InstancePartition,
    params: &LossParams,
) -> Result<f64> {
    let means = instance_means(embeddings, partition)?;
    let inter = inter_loss(embeddings, partition, params)?;
    Ok(inter + params.gamma_intra * intra_loss(means.view(), params))
}

/// Exact subgradient of `total_loss` with respect to every embedding row,
/// including the dependence of each mean on its members. At hinge kinks
/// (argument exactly 0) and at coincident points (zero norm) the
/// contribution is defined as 0. Rows outside the partition get zeros.
pub fn loss_gradients(
    embeddings: ArrayView2<f64>,
    partition: &InstancePartition,
    params: &LossParams,
) -> Result<Array2<f64>> {
    let n = embeddings.nrows();
    let d = embeddings.ncols();
    let means = instance_means(embeddings, partition)?;
    let weights = instance_weights(partition, params.p);
    let m = partition.instance_count();
    let mut grad = Array2::zeros((n, d));

    // Inter term. With v_k = mu_i - e_k and u_k = v_k / ||v_k|| where the
    // hinge is active (0 otherwise):
    //   d l_i / d e_m = (1/|E_i|) * ( (sum_k u_k) / |E_i| - u_m ).
    for (i, group) in partition.groups().iter().enumerate() {
        let gsize = group.len() as f64;
        let coef = weights[i] / (m as f64 * gsize);
        let mut u_sum = Array1::<f64>::zeros(d);
        let mut u_rows: Vec<Option<Array1<f64>>> = Vec::with_capacity(group.len());
        for &k in group {
            let mut v = Array1::<f64>::zeros(d);
            let mut sq = 0.0;
            for c in 0..d {
                let diff = means[[i, c]] - embeddings[[k, c]];
                v[c] = diff;
                sq += diff * diff;
            }
            let norm = sq.sqrt();
            if norm - params.delta_inter > 0.0 && norm > 0.0 {
                let u = v.mapv(|x| x / norm);
                u_sum += &u;
                u_rows.push(Some(u));
            } else {
                u_rows.push(None);
            }
        }
        for (slot, &k) in group.iter().enumerate() {
            for c in 0..d {
                let direct = match &u_rows[slot] {
                    Some(u) => u[c],
                    None => 0.0,
                };
                grad[[k, c]] += coef * (u_sum[c] / gsize - direct);
            }
        }
    }

    // Intra term: d L_intra / d mu_i, then mu_i distributes 1/|E_i| to each
    // member. Ordered pairs (i,j) and (j,i) contribute identically, hence
    // the factor 2.
    if m >= 2 {
        let norm_coef = params.gamma_intra / (m * (m - 1)) as f64;
        for i in 0..m {
            let mut dmu = Array1::<f64>::zeros(d);
            for j in 0..m {
                if i == j {
                    continue;
                }
                let mut sq = 0.0;
                for c in 0..d {
                    let diff = means[[i, c]] - means[[j, c]];
                    sq += diff * diff;
                }
                let dist = sq.sqrt();
                if 2.0 * params.delta_intra - dist > 0.0 && dist > 0.0 {
                    for c in 0..d {
                        dmu[c] -= 2.0 * (means[[i, c]] - means[[j, c]]) / dist;
                    }
                }
            }
            let group = &partition.groups()[i];
            let member_coef = norm_coef / group.len() as f64;
            for &k in group {
                for c in 0..d {
                    grad[[k, c]] += member_coef * dmu[c];
                }
            }
        }
    }

    Ok(grad)
}
