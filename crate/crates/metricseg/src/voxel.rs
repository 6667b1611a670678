//! Sparse voxelization by coordinate hashing, and the inverse label transfer.

use std::collections::HashMap;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Supported range for a voxel coordinate component: `[-2^20, 2^20)`.
pub const COORD_LIMIT: i64 = 1 << 20;

/// Packs an integer 3-coordinate into a 64-bit key, injectively over
/// `[-2^20, 2^20)^3` and stable across runs.
pub fn voxel_key(coord: [i64; 3]) -> Result<u64> {
    let mut key = 0u64;
    for (axis, &c) in coord.iter().enumerate() {
        if !(-COORD_LIMIT..COORD_LIMIT).contains(&c) {
            return Err(Error::CoordOutOfRange { value: c });
        }
        key |= ((c + COORD_LIMIT) as u64) << (21 * axis);
    }
    Ok(key)
}

/// One occupied cell: integer coordinate, mean feature (xyz then rgb),
/// majority labels, and the indices of its member points.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelCell {
    pub coord: [i64; 3],
    /// Arithmetic mean of member features: `[x, y, z, r, g, b]`.
    pub feature: [f64; 6],
    pub instance_id: Option<u32>,
    pub semantic_id: Option<u32>,
    pub point_indices: Vec<u32>,
}

/// Sparse voxel grid. Cells are sorted lexicographically by coordinate, so
/// iteration order is deterministic. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub voxel_size: f64,
    pub cells: Vec<VoxelCell>,
    /// For each input point, the index of its containing cell.
    pub point_to_voxel: Vec<u32>,
}

impl VoxelGrid {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Majority vote over optional labels. Ties prefer a concrete id over
/// absent, and the lowest id among concrete ones.
fn majority_label(labels: impl Iterator<Item = Option<u32>>) -> Option<u32> {
    let mut counts: HashMap<Option<u32>, usize> = HashMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .max_by(|(la, ca), (lb, cb)| {
            // Higher count wins; on equal counts the label that sorts first
            // under (Some(lowest) < ... < None) wins.
            ca.cmp(cb).then_with(|| rank(*lb).cmp(&rank(*la)))
        })
        .and_then(|(l, _)| l)
}

fn rank(l: Option<u32>) -> u64 {
    match l {
        Some(v) => v as u64,
        None => u64::MAX,
    }
}

/// Groups points into cells of side `voxel_size` (cell coordinate is the
/// componentwise floor of position / voxel_size), averaging features and
/// majority-voting labels.
pub fn voxelize(cloud: &PointCloud, voxel_size: f64) -> Result<VoxelGrid> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::Config(format!("voxel_size must be > 0, got {voxel_size}")));
    }
    let mut by_key: HashMap<u64, Vec<u32>> = HashMap::new();
    let mut coords: HashMap<u64, [i64; 3]> = HashMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        if !p.position.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinitePoint { index: i });
        }
        let coord = [
            (p.position[0] / voxel_size).floor() as i64,
            (p.position[1] / voxel_size).floor() as i64,
            (p.position[2] / voxel_size).floor() as i64,
        ];
        let key = voxel_key(coord)?;
        by_key.entry(key).or_default().push(i as u32);
        coords.entry(key).or_insert(coord);
    }

    let mut keys: Vec<u64> = by_key.keys().copied().collect();
    keys.sort_unstable();
    // The packed key orders by (z, y, x); re-sort by coordinate tuple for
    // the documented lexicographic (x, y, z) order.
    let mut items: Vec<([i64; 3], Vec<u32>)> = keys
        .into_iter()
        .map(|k| (coords[&k], by_key.remove(&k).unwrap()))
        .collect();
    items.sort_unstable_by_key(|(c, _)| *c);

    let mut cells = Vec::with_capacity(items.len());
    let mut point_to_voxel = vec![0u32; cloud.len()];
    for (cell_idx, (coord, members)) in items.into_iter().enumerate() {
        let mut feature = [0.0f64; 6];
        for &m in &members {
            let p = &cloud.points[m as usize];
            for k in 0..3 {
                feature[k] += p.position[k];
                feature[3 + k] += p.color[k];
            }
            point_to_voxel[m as usize] = cell_idx as u32;
        }
        let inv = 1.0 / members.len() as f64;
        for f in feature.iter_mut() {
            *f *= inv;
        }
        let instance_id =
            majority_label(members.iter().map(|&m| cloud.points[m as usize].instance_id));
        let semantic_id =
            majority_label(members.iter().map(|&m| cloud.points[m as usize].semantic_id));
        cells.push(VoxelCell {
            coord,
            feature,
            instance_id,
            semantic_id,
            point_indices: members,
        });
    }
    Ok(VoxelGrid {
        voxel_size,
        cells,
        point_to_voxel,
    })
}

/// Transfers one label per cell back to the points, via the stored
/// point-to-cell map.
pub fn devoxelize<T: Clone>(grid: &VoxelGrid, per_voxel_labels: &[T]) -> Result<Vec<T>> {
    if per_voxel_labels.len() != grid.cells.len() {
        return Err(Error::LengthMismatch {
            expected: grid.cells.len(),
            actual: per_voxel_labels.len(),
        });
    }
    Ok(grid
        .point_to_voxel
        .iter()
        .map(|&v| per_voxel_labels[v as usize].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::{HashMap, HashSet};

    fn pt(pos: [f64; 3]) -> Point {
        Point {
            position: pos,
            color: [0.5; 3],
            instance_id: None,
            semantic_id: None,
        }
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    let mut p = pt([0.0; 3]);
                    for v in p.position.iter_mut() {
                        *v = rng.gen::<f64>();
                    }
                    p.instance_id = Some(rng.gen_range(0..5));
                    p
                })
                .collect(),
        )
    }

    #[test]
    fn single_point_single_cell() {
        let grid = voxelize(&PointCloud::new(vec![pt([0.01, 0.01, 0.01])]), 0.02).unwrap();
        assert_eq!(grid.cells.len(), 1);
        assert_eq!(grid.cells[0].coord, [0, 0, 0]);
        assert_eq!(grid.point_to_voxel, vec![0]);
    }

    #[test]
    fn mean_color_of_two_points() {
        let mut a = pt([0.001, 0.0, 0.0]);
        a.color = [0.0; 3];
        let mut b = pt([0.015, 0.0, 0.0]);
        b.color = [1.0; 3];
        let grid = voxelize(&PointCloud::new(vec![a, b]), 0.02).unwrap();
        assert_eq!(grid.cells.len(), 1);
        for k in 3..6 {
            assert!((grid.cells[0].feature[k] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn cell_count_matches_brute_force_grouping() {
        let cloud = random_cloud(10_000, 7);
        let grid = voxelize(&cloud, 0.02).unwrap();
        // Independent oracle: group points by exact floored integer triple.
        let mut groups: HashSet<(i64, i64, i64)> = HashSet::new();
        for p in &cloud.points {
            groups.insert((
                (p.position[0] / 0.02).floor() as i64,
                (p.position[1] / 0.02).floor() as i64,
                (p.position[2] / 0.02).floor() as i64,
            ));
        }
        assert_eq!(grid.cells.len(), groups.len());
    }

    #[test]
    fn empty_cloud_rejected() {
        assert!(matches!(
            voxelize(&PointCloud::default(), 0.02),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn non_finite_position_names_point() {
        let cloud = PointCloud::new(vec![pt([0.0; 3]), pt([f64::INFINITY, 0.0, 0.0])]);
        match voxelize(&cloud, 0.02) {
            Err(Error::NonFinitePoint { index }) => assert_eq!(index, 1),
            other => panic!("expected NonFinitePoint, got {other:?}"),
        }
    }

    #[test]
    fn majority_vote_prefers_lowest_id_on_tie() {
        let mut a = pt([0.0; 3]);
        a.instance_id = Some(4);
        let mut b = pt([0.001, 0.0, 0.0]);
        b.instance_id = Some(2);
        let grid = voxelize(&PointCloud::new(vec![a, b]), 0.02).unwrap();
        assert_eq!(grid.cells[0].instance_id, Some(2));
    }

    #[test]
    fn majority_vote_counts_absent_labels() {
        let mut a = pt([0.0; 3]);
        a.instance_id = Some(9);
        let cloud = PointCloud::new(vec![pt([0.001, 0.0, 0.0]), pt([0.002, 0.0, 0.0]), a]);
        let grid = voxelize(&cloud, 0.02).unwrap();
        assert_eq!(grid.cells[0].instance_id, None);
    }

    #[test]
    fn devoxelize_broadcasts_cell_label() {
        let cloud = PointCloud::new(vec![
            pt([0.001, 0.0, 0.0]),
            pt([0.002, 0.0, 0.0]),
            pt([0.003, 0.0, 0.0]),
        ]);
        let grid = voxelize(&cloud, 0.02).unwrap();
        assert_eq!(devoxelize(&grid, &[7u32]).unwrap(), vec![7, 7, 7]);
    }

    #[test]
    fn devoxelize_length_mismatch() {
        let grid = voxelize(&PointCloud::new(vec![pt([0.0; 3])]), 0.02).unwrap();
        assert!(devoxelize(&grid, &[1u32, 2]).is_err());
    }

    #[test]
    fn devoxelize_matches_direct_index_lookup() {
        let cloud = random_cloud(500, 3);
        let grid = voxelize(&cloud, 0.05).unwrap();
        let labels: Vec<u32> = (0..grid.cells.len() as u32).map(|i| i * 3 + 1).collect();
        let out = devoxelize(&grid, &labels).unwrap();
        for (p, lab) in out.iter().enumerate() {
            assert_eq!(*lab, labels[grid.point_to_voxel[p] as usize]);
        }
    }

    #[test]
    fn devoxelize_permutes_with_cells() {
        let cloud = random_cloud(200, 11);
        let grid = voxelize(&cloud, 0.05).unwrap();
        let labels: Vec<u32> = (0..grid.cells.len() as u32).collect();
        let base = devoxelize(&grid, &labels).unwrap();
        let permuted: Vec<u32> = labels.iter().map(|&l| (l + 13) % labels.len() as u32).collect();
        let out = devoxelize(&grid, &permuted).unwrap();
        for (a, b) in base.iter().zip(&out) {
            assert_eq!(permuted[*a as usize], *b);
        }
    }

    #[test]
    fn voxel_key_basics() {
        assert_ne!(voxel_key([0, 0, 0]).unwrap(), voxel_key([0, 0, 1]).unwrap());
        voxel_key([-1, -1, -1]).unwrap();
        assert!(voxel_key([COORD_LIMIT, 0, 0]).is_err());
        assert!(voxel_key([0, -COORD_LIMIT - 1, 0]).is_err());
    }

    #[test]
    fn voxel_key_no_collisions_on_random_coords() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut seen: HashMap<u64, [i64; 3]> = HashMap::with_capacity(1_000_000);
        for _ in 0..1_000_000 {
            let c = [
                rng.gen_range(-COORD_LIMIT..COORD_LIMIT),
                rng.gen_range(-COORD_LIMIT..COORD_LIMIT),
                rng.gen_range(-COORD_LIMIT..COORD_LIMIT),
            ];
            let key = voxel_key(c).unwrap();
            if let Some(prev) = seen.insert(key, c) {
                assert_eq!(prev, c, "collision for key {key}");
            }
        }
    }

    #[test]
    fn translation_by_cell_multiples_shifts_coords() {
        let mut cloud = random_cloud(400, 5);
        // Keep points away from cell boundaries so floating-point rounding
        // of the translated positions cannot flip a cell assignment.
        let size = 0.02;
        for p in cloud.points.iter_mut() {
            for v in p.position.iter_mut() {
                let frac = (*v / size).fract();
                if frac < 0.05 || frac > 0.95 {
                    *v += 0.3 * size;
                }
            }
        }
        let base = voxelize(&cloud, size).unwrap();
        let shift = [3i64, -2, 5];
        let mut moved = cloud.clone();
        for p in moved.points.iter_mut() {
            for k in 0..3 {
                p.position[k] += shift[k] as f64 * size;
            }
        }
        let shifted = voxelize(&moved, size).unwrap();
        assert_eq!(base.cells.len(), shifted.cells.len());
        // Sorted order is preserved under a uniform shift.
        for (a, b) in base.cells.iter().zip(&shifted.cells) {
            for k in 0..3 {
                assert_eq!(a.coord[k] + shift[k], b.coord[k]);
            }
            assert_eq!(a.point_indices, b.point_indices);
        }
        assert_eq!(base.point_to_voxel, shifted.point_to_voxel);
    }

    #[test]
    fn cell_count_non_increasing_under_size_doubling() {
        let cloud = random_cloud(3_000, 9);
        let mut prev = usize::MAX;
        // Doubling sizes nest the grids, which is what makes the count
        // monotone; arbitrary size ladders do not nest.
        for size in [0.01, 0.02, 0.04, 0.08, 0.16] {
            let n = voxelize(&cloud, size).unwrap().cells.len();
            assert!(n <= prev, "count grew from {prev} to {n} at size {size}");
            prev = n;
        }
    }
}
