//! Per-voxel local-neighborhood statistics that stand in for a learned
//! receptive field: centered position, color, and exact radius-search
//! aggregates (neighbor count, color mean, position covariance diagonal).

use std::collections::HashMap;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::voxel::VoxelGrid;

/// Width of the conditioned model input row: centered position (3), color
/// (3), log density (1), neighbor color mean (3), covariance diagonal (3).
pub const FEATURE_WIDTH: usize = 13;

/// Neighborhood statistics per voxel, all computed over the exact set of
/// voxels whose mean position lies within `radius` (self included).
#[derive(Debug, Clone)]
pub struct NeighborhoodFeatures {
    pub radius: f64,
    /// Voxel mean position minus the grid centroid.
    pub centered_position: Vec<[f64; 3]>,
    pub color: Vec<[f64; 3]>,
    /// Neighbor count within `radius`, self included (so always >= 1).
    pub density: Vec<u32>,
    pub color_mean: Vec<[f64; 3]>,
    /// Population covariance diagonal of neighbor positions.
    pub position_cov_diag: Vec<[f64; 3]>,
}

impl NeighborhoodFeatures {
    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    /// Conditioned model input rows. Raw counts enter as `ln(density)` and
    /// the covariance diagonal is scaled by `1/radius^2` so every channel
    /// stays within a few units of zero.
    pub fn matrix(&self) -> Array2<f64> {
        let n = self.len();
        let inv_r2 = 1.0 / (self.radius * self.radius);
        let mut m = Array2::zeros((n, FEATURE_WIDTH));
        for i in 0..n {
            for k in 0..3 {
                m[[i, k]] = self.centered_position[i][k];
                m[[i, 3 + k]] = self.color[i][k];
                m[[i, 7 + k]] = self.color_mean[i][k];
                m[[i, 10 + k]] = self.position_cov_diag[i][k] * inv_r2;
            }
            m[[i, 6]] = (self.density[i] as f64).ln();
        }
        m
    }
}

/// Computes exact neighborhood statistics for every voxel. The search uses
/// a coarse grid of cell size `radius`, so only the 27 surrounding buckets
/// are scanned per voxel; results equal the quadratic scan.
pub fn featurize(grid: &VoxelGrid, radius: f64) -> Result<NeighborhoodFeatures> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Config(format!("radius must be > 0, got {radius}")));
    }
    let n = grid.cells.len();
    let positions: Vec<[f64; 3]> = grid
        .cells
        .iter()
        .map(|c| [c.feature[0], c.feature[1], c.feature[2]])
        .collect();
    let colors: Vec<[f64; 3]> = grid
        .cells
        .iter()
        .map(|c| [c.feature[3], c.feature[4], c.feature[5]])
        .collect();

    let mut centroid = [0.0f64; 3];
    for p in &positions {
        for k in 0..3 {
            centroid[k] += p[k];
        }
    }
    for c in centroid.iter_mut() {
        *c /= n.max(1) as f64;
    }

    // Coarse buckets of side `radius`; bucket lists keep ascending voxel
    // order so accumulation order is deterministic.
    let mut buckets: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
    let bucket_of = |p: &[f64; 3]| {
        [
            (p[0] / radius).floor() as i64,
            (p[1] / radius).floor() as i64,
            (p[2] / radius).floor() as i64,
        ]
    };
    for (i, p) in positions.iter().enumerate() {
        buckets.entry(bucket_of(p)).or_default().push(i as u32);
    }

    let r2 = radius * radius;
    let mut density = vec![0u32; n];
    let mut color_mean = vec![[0.0f64; 3]; n];
    let mut cov_diag = vec![[0.0f64; 3]; n];
    for i in 0..n {
        let p = positions[i];
        let b = bucket_of(&p);
        let mut count = 0u32;
        let mut pos_sum = [0.0f64; 3];
        let mut pos_sq = [0.0f64; 3];
        let mut col_sum = [0.0f64; 3];
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let Some(list) = buckets.get(&[b[0] + dx, b[1] + dy, b[2] + dz]) else {
                        continue;
                    };
                    for &j in list {
                        let q = positions[j as usize];
                        let mut sq = 0.0;
                        for k in 0..3 {
                            let d = p[k] - q[k];
                            sq += d * d;
                        }
                        if sq <= r2 {
                            count += 1;
                            for k in 0..3 {
                                pos_sum[k] += q[k];
                                pos_sq[k] += q[k] * q[k];
                                col_sum[k] += colors[j as usize][k];
                            }
                        }
                    }
                }
            }
        }
        let inv = 1.0 / count as f64;
        density[i] = count;
        for k in 0..3 {
            color_mean[i][k] = col_sum[k] * inv;
            let mean = pos_sum[k] * inv;
            cov_diag[i][k] = (pos_sq[k] * inv - mean * mean).max(0.0);
        }
    }

    let centered_position = positions
        .iter()
        .map(|p| [p[0] - centroid[0], p[1] - centroid[1], p[2] - centroid[2]])
        .collect();
    Ok(NeighborhoodFeatures {
        radius,
        centered_position,
        color: colors,
        density,
        color_mean,
        position_cov_diag: cov_diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{Point, PointCloud};
    use crate::voxel::voxelize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud_at(positions: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(
            positions
                .iter()
                .map(|&position| Point {
                    position,
                    color: [0.5; 3],
                    instance_id: None,
                    semantic_id: None,
                })
                .collect(),
        )
    }

    #[test]
    fn isolated_voxel_density_one_cov_zero() {
        let grid = voxelize(&cloud_at(&[[0.0; 3], [5.0, 5.0, 5.0]]), 0.02).unwrap();
        let f = featurize(&grid, 0.12).unwrap();
        assert_eq!(f.density, vec![1, 1]);
        for c in &f.position_cov_diag {
            assert_eq!(*c, [0.0; 3]);
        }
    }

    #[test]
    fn two_voxels_within_radius_both_density_two() {
        let grid = voxelize(&cloud_at(&[[0.0; 3], [0.05, 0.0, 0.0]]), 0.02).unwrap();
        let f = featurize(&grid, 0.12).unwrap();
        assert_eq!(f.density, vec![2, 2]);
    }

    #[test]
    fn densities_match_quadratic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let positions: Vec<[f64; 3]> = (0..400)
            .map(|_| {
                [
                    rng.gen_range(0.0..0.5),
                    rng.gen_range(0.0..0.5),
                    rng.gen_range(0.0..0.5),
                ]
            })
            .collect();
        let grid = voxelize(&cloud_at(&positions), 0.02).unwrap();
        let radius = 0.1;
        let f = featurize(&grid, radius).unwrap();
        let pos: Vec<[f64; 3]> = grid
            .cells
            .iter()
            .map(|c| [c.feature[0], c.feature[1], c.feature[2]])
            .collect();
        for (i, a) in pos.iter().enumerate() {
            let mut count = 0u32;
            for b in &pos {
                let sq: f64 = (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum();
                if sq <= radius * radius {
                    count += 1;
                }
            }
            assert_eq!(f.density[i], count, "voxel {i}");
        }
    }

    #[test]
    fn matrix_width_and_log_density() {
        let grid = voxelize(&cloud_at(&[[0.0; 3]]), 0.02).unwrap();
        let f = featurize(&grid, 0.12).unwrap();
        let m = f.matrix();
        assert_eq!(m.shape(), &[1, FEATURE_WIDTH]);
        assert_eq!(m[[0, 6]], 0.0); // ln(1)
    }

    #[test]
    fn bad_radius_rejected() {
        let grid = voxelize(&cloud_at(&[[0.0; 3]]), 0.02).unwrap();
        assert!(featurize(&grid, 0.0).is_err());
        assert!(featurize(&grid, f64::NAN).is_err());
    }
}
