//! Deterministic synthetic indoor scenes (background planes plus primitive
//! object instances, optionally in physical contact) and training-time
//! augmentation.
//!
//! Semantic ids: 0 = floor, 1 = wall, then one id per object archetype
//! (defaults: 2 = box, 3 = cylinder, 4 = sphere). Background points carry
//! no instance id; object instance ids are contiguous `1..=K`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};

pub const FLOOR_SEMANTIC: u32 = 0;
pub const WALL_SEMANTIC: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimitiveKind {
    Box,
    Cylinder,
    Sphere,
}

/// One object archetype: shape family, semantic id, and the color box its
/// per-object base color is drawn from.
#[derive(Debug, Clone)]
pub struct ArchetypeConfig {
    pub kind: PrimitiveKind,
    pub semantic_id: u32,
    pub color_lo: [f64; 3],
    pub color_hi: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct SceneConfig {
    /// Side of the square room, meters.
    pub room_extent: f64,
    /// Height of the wall band, meters.
    pub wall_height: f64,
    /// Inclusive range for the object count.
    pub object_count: (usize, usize),
    /// Characteristic object size range, meters.
    pub object_size: (f64, f64),
    pub archetypes: Vec<ArchetypeConfig>,
    /// Background sampling density, points per m².
    pub background_density: f64,
    /// Object surface sampling density, points per m².
    pub object_density: f64,
    /// Chance that a scene contains one pair of touching objects.
    pub contact_probability: f64,
    /// Per-point Gaussian position noise sigma, meters.
    pub position_noise: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            room_extent: 4.0,
            wall_height: 0.5,
            object_count: (4, 7),
            object_size: (0.28, 0.55),
            archetypes: vec![
                ArchetypeConfig {
                    kind: PrimitiveKind::Box,
                    semantic_id: 2,
                    color_lo: [0.55, 0.05, 0.05],
                    color_hi: [0.95, 0.45, 0.45],
                },
                ArchetypeConfig {
                    kind: PrimitiveKind::Cylinder,
                    semantic_id: 3,
                    color_lo: [0.05, 0.55, 0.05],
                    color_hi: [0.45, 0.95, 0.45],
                },
                ArchetypeConfig {
                    kind: PrimitiveKind::Sphere,
                    semantic_id: 4,
                    color_lo: [0.05, 0.05, 0.55],
                    color_hi: [0.45, 0.45, 0.95],
                },
            ],
            background_density: 100.0,
            object_density: 300.0,
            contact_probability: 0.5,
            position_noise: 0.002,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.room_extent > 0.0) || !(self.wall_height > 0.0) {
            return bad("room extents must be > 0".into());
        }
        if self.object_count.0 < 1 || self.object_count.0 > self.object_count.1 {
            return bad(format!("bad object count range {:?}", self.object_count));
        }
        if !(self.object_size.0 > 0.0 && self.object_size.0 <= self.object_size.1) {
            return bad(format!("bad object size range {:?}", self.object_size));
        }
        if !(0.0..=1.0).contains(&self.contact_probability) {
            return bad(format!("contact probability {} not in [0,1]", self.contact_probability));
        }
        if self.archetypes.is_empty() {
            return bad("at least one archetype required".into());
        }
        if !(self.background_density > 0.0 && self.object_density > 0.0) {
            return bad("densities must be > 0".into());
        }
        if !(self.position_noise >= 0.0) {
            return bad("position noise must be >= 0".into());
        }
        Ok(())
    }
}

/// Concrete shape instance sitting on the floor (z = 0).
#[derive(Debug, Clone, Copy)]
enum Shape {
    /// Axis-aligned box: horizontal half extents, full height.
    Box { half: [f64; 2], height: f64 },
    Cylinder { radius: f64, height: f64 },
    Sphere { radius: f64 },
}

impl Shape {
    fn top(&self) -> f64 {
        match *self {
            Shape::Box { height, .. } | Shape::Cylinder { height, .. } => height,
            Shape::Sphere { radius } => 2.0 * radius,
        }
    }

    /// Radius of the enclosing vertical cylinder.
    fn bound_radius(&self) -> f64 {
        match *self {
            Shape::Box { half, .. } => half[0].hypot(half[1]),
            Shape::Cylinder { radius, .. } | Shape::Sphere { radius } => radius,
        }
    }

    /// Horizontal distance from the axis to the surface along unit
    /// direction `u`, at height `z` (which must lie within the body).
    fn radial(&self, u: [f64; 2], z: f64) -> f64 {
        match *self {
            Shape::Box { half, .. } => {
                let rx = if u[0].abs() < 1e-12 {
                    f64::INFINITY
                } else {
                    half[0] / u[0].abs()
                };
                let ry = if u[1].abs() < 1e-12 {
                    f64::INFINITY
                } else {
                    half[1] / u[1].abs()
                };
                rx.min(ry)
            }
            Shape::Cylinder { radius, .. } => radius,
            Shape::Sphere { radius } => {
                let dz = z - radius;
                (radius * radius - dz * dz).max(0.0).sqrt()
            }
        }
    }

    fn surface_area(&self) -> f64 {
        match *self {
            // Bottom faces are omitted: a scanner never sees them.
            Shape::Box { half, height } => {
                4.0 * half[0] * half[1] + 4.0 * height * (half[0] + half[1])
            }
            Shape::Cylinder { radius, height } => {
                2.0 * std::f64::consts::PI * radius * height + std::f64::consts::PI * radius * radius
            }
            Shape::Sphere { radius } => 4.0 * std::f64::consts::PI * radius * radius,
        }
    }
}

struct PlacedObject {
    center: [f64; 2],
    shape: Shape,
    archetype: usize,
    base_color: [f64; 3],
}

const PLACEMENT_ATTEMPTS: usize = 100;
/// Surface gap enforced between non-touching objects, meters.
const CLEARANCE: f64 = 0.06;
/// Penetration used for touching pairs so sampled surfaces interleave.
const CONTACT_OVERLAP: f64 = 0.01;

/// Generates one fully labeled scene. Identical configs (including seed)
/// produce identical clouds.
pub fn generate_scene(cfg: &SceneConfig) -> Result<PointCloud> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ext = cfg.room_extent;

    let count = rng.gen_range(cfg.object_count.0..=cfg.object_count.1);
    let contact_pair = count >= 2 && rng.gen_bool(cfg.contact_probability);

    let mut objects: Vec<PlacedObject> = Vec::with_capacity(count);
    for i in 0..count {
        let archetype = rng.gen_range(0..cfg.archetypes.len());
        let size = rng.gen_range(cfg.object_size.0..=cfg.object_size.1);
        let shape = sample_shape(cfg.archetypes[archetype].kind, size, &mut rng);
        let base_color = sample_color(&cfg.archetypes[archetype], &mut rng);
        let margin = shape.bound_radius() + 0.05;
        if margin * 2.0 >= ext {
            return Err(Error::Config(format!(
                "room extent {ext} too small for objects of size {size}"
            )));
        }

        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let center = if i == 1 && contact_pair {
                // Touch the first object: centers along a random direction at
                // the sum of the two radial extents minus a small overlap.
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                let u = [theta.cos(), theta.sin()];
                let zc = 0.5 * objects[0].shape.top().min(shape.top());
                let dist = objects[0].shape.radial(u, zc) + shape.radial([-u[0], -u[1]], zc)
                    - CONTACT_OVERLAP;
                [
                    objects[0].center[0] + dist * u[0],
                    objects[0].center[1] + dist * u[1],
                ]
            } else {
                [
                    rng.gen_range(margin..ext - margin),
                    rng.gen_range(margin..ext - margin),
                ]
            };
            if center[0] < margin
                || center[0] > ext - margin
                || center[1] < margin
                || center[1] > ext - margin
            {
                continue;
            }
            let clear = objects.iter().enumerate().all(|(j, o)| {
                if i == 1 && contact_pair && j == 0 {
                    return true;
                }
                let dx = center[0] - o.center[0];
                let dy = center[1] - o.center[1];
                dx.hypot(dy) >= shape.bound_radius() + o.shape.bound_radius() + CLEARANCE
            });
            if clear {
                placed = Some(center);
                break;
            }
        }
        let center = placed.ok_or(Error::Placement {
            attempts: PLACEMENT_ATTEMPTS,
        })?;
        objects.push(PlacedObject {
            center,
            shape,
            archetype,
            base_color,
        });
    }

    let mut points = Vec::new();
    sample_background(cfg, &mut rng, &mut points);
    for (k, obj) in objects.iter().enumerate() {
        let semantic = cfg.archetypes[obj.archetype].semantic_id;
        sample_object(cfg, obj, (k + 1) as u32, semantic, &mut rng, &mut points);
    }
    Ok(PointCloud::new(points))
}

fn sample_shape(kind: PrimitiveKind, size: f64, rng: &mut ChaCha8Rng) -> Shape {
    match kind {
        PrimitiveKind::Box => Shape::Box {
            half: [
                0.5 * size * rng.gen_range(0.6..=1.0),
                0.5 * size * rng.gen_range(0.6..=1.0),
            ],
            height: size * rng.gen_range(0.6..=1.0),
        },
        PrimitiveKind::Cylinder => Shape::Cylinder {
            radius: 0.5 * size * rng.gen_range(0.6..=1.0),
            height: size * rng.gen_range(0.6..=1.0),
        },
        PrimitiveKind::Sphere => Shape::Sphere {
            radius: 0.5 * size * rng.gen_range(0.7..=1.0),
        },
    }
}

fn sample_color(arch: &ArchetypeConfig, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let mut c = [0.0; 3];
    for k in 0..3 {
        c[k] = if arch.color_lo[k] < arch.color_hi[k] {
            rng.gen_range(arch.color_lo[k]..arch.color_hi[k])
        } else {
            arch.color_lo[k]
        };
    }
    c
}

fn push_point(
    pos: [f64; 3],
    base_color: [f64; 3],
    instance_id: Option<u32>,
    semantic_id: u32,
    noise: f64,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Point>,
) {
    let gauss = Normal::new(0.0, 1.0).unwrap();
    let mut position = pos;
    if noise > 0.0 {
        for v in position.iter_mut() {
            *v += noise * gauss.sample(rng);
        }
    }
    let mut color = base_color;
    for c in color.iter_mut() {
        *c = (*c + 0.02 * gauss.sample(rng)).clamp(0.0, 1.0);
    }
    out.push(Point {
        position,
        color,
        instance_id,
        semantic_id: Some(semantic_id),
    });
}

fn sample_background(cfg: &SceneConfig, rng: &mut ChaCha8Rng, out: &mut Vec<Point>) {
    let ext = cfg.room_extent;
    let floor_base = {
        let g = rng.gen_range(0.45..0.55);
        [g, g, g]
    };
    let wall_base = {
        let g = rng.gen_range(0.6..0.7);
        [g, g, g]
    };
    let floor_count = (cfg.background_density * ext * ext).round() as usize;
    for _ in 0..floor_count {
        let pos = [rng.gen_range(0.0..ext), rng.gen_range(0.0..ext), 0.0];
        push_point(pos, floor_base, None, FLOOR_SEMANTIC, cfg.position_noise, rng, out);
    }
    let wall_count = (cfg.background_density * ext * cfg.wall_height).round() as usize;
    for wall in 0..4 {
        for _ in 0..wall_count {
            let a = rng.gen_range(0.0..ext);
            let z = rng.gen_range(0.0..cfg.wall_height);
            let pos = match wall {
                0 => [a, 0.0, z],
                1 => [a, ext, z],
                2 => [0.0, a, z],
                _ => [ext, a, z],
            };
            push_point(pos, wall_base, None, WALL_SEMANTIC, cfg.position_noise, rng, out);
        }
    }
}

fn sample_object(
    cfg: &SceneConfig,
    obj: &PlacedObject,
    instance_id: u32,
    semantic_id: u32,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Point>,
) {
    let count = (cfg.object_density * obj.shape.surface_area()).round().max(1.0) as usize;
    let (cx, cy) = (obj.center[0], obj.center[1]);
    for _ in 0..count {
        let pos = match obj.shape {
            Shape::Box { half, height } => {
                let (hx, hy) = (half[0], half[1]);
                let a_top = 4.0 * hx * hy;
                let a_x = 2.0 * hy * height; // each face x = +-hx
                let a_y = 2.0 * hx * height;
                let total = a_top + 2.0 * a_x + 2.0 * a_y;
                let pick = rng.gen_range(0.0..total);
                if pick < a_top {
                    [
                        cx + rng.gen_range(-hx..hx),
                        cy + rng.gen_range(-hy..hy),
                        height,
                    ]
                } else if pick < a_top + 2.0 * a_x {
                    let sign = if pick < a_top + a_x { 1.0 } else { -1.0 };
                    [
                        cx + sign * hx,
                        cy + rng.gen_range(-hy..hy),
                        rng.gen_range(0.0..height),
                    ]
                } else {
                    let sign = if pick < a_top + 2.0 * a_x + a_y { 1.0 } else { -1.0 };
                    [
                        cx + rng.gen_range(-hx..hx),
                        cy + sign * hy,
                        rng.gen_range(0.0..height),
                    ]
                }
            }
            Shape::Cylinder { radius, height } => {
                let a_side = std::f64::consts::TAU * radius * height;
                let a_top = std::f64::consts::PI * radius * radius;
                let pick = rng.gen_range(0.0..a_side + a_top);
                if pick < a_side {
                    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                    [
                        cx + radius * theta.cos(),
                        cy + radius * theta.sin(),
                        rng.gen_range(0.0..height),
                    ]
                } else {
                    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                    let r = radius * rng.gen::<f64>().sqrt();
                    [cx + r * theta.cos(), cy + r * theta.sin(), height]
                }
            }
            Shape::Sphere { radius } => {
                let gauss = Normal::new(0.0, 1.0).unwrap();
                let mut dir = [0.0f64; 3];
                loop {
                    for v in dir.iter_mut() {
                        *v = gauss.sample(rng);
                    }
                    let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
                    if n > 1e-12 {
                        for v in dir.iter_mut() {
                            *v /= n;
                        }
                        break;
                    }
                }
                [
                    cx + radius * dir[0],
                    cy + radius * dir[1],
                    radius + radius * dir[2],
                ]
            }
        };
        push_point(
            pos,
            obj.base_color,
            Some(instance_id),
            semantic_id,
            cfg.position_noise,
            rng,
            out,
        );
    }
}

/// Training-time augmentation parameters. Defaults follow the recipe used
/// throughout: color jitter sigma 0.03, global scale in `[0.8, 1.2]`,
/// arbitrary z rotation, x rotation with 5 degree sigma clipped at 10.
#[derive(Debug, Clone)]
pub struct AugmentParams {
    pub color_jitter_sigma: f64,
    pub scale_range: (f64, f64),
    pub z_rotation: bool,
    pub x_rotation_sigma_deg: f64,
    pub x_rotation_max_deg: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            color_jitter_sigma: 0.03,
            scale_range: (0.8, 1.2),
            z_rotation: true,
            x_rotation_sigma_deg: 5.0,
            x_rotation_max_deg: 10.0,
        }
    }
}

/// Applies `scale * Rx(beta) * Rz(alpha)` to positions and Gaussian jitter
/// to colors. Labels and point count are unchanged.
pub fn augment(cloud: &PointCloud, params: &AugmentParams, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = if params.z_rotation {
        rng.gen_range(0.0..std::f64::consts::TAU)
    } else {
        0.0
    };
    let beta = if params.x_rotation_sigma_deg > 0.0 {
        let sigma = params.x_rotation_sigma_deg.to_radians();
        let max = params.x_rotation_max_deg.to_radians();
        let raw = Normal::new(0.0, sigma).unwrap().sample(&mut rng);
        raw.clamp(-max, max)
    } else {
        0.0
    };
    let scale = if params.scale_range.0 < params.scale_range.1 {
        rng.gen_range(params.scale_range.0..params.scale_range.1)
    } else {
        params.scale_range.0
    };

    let (ca, sa) = (alpha.cos(), alpha.sin());
    let (cb, sb) = (beta.cos(), beta.sin());
    let gauss = Normal::new(0.0, 1.0).unwrap();

    let points = cloud
        .points
        .iter()
        .map(|p| {
            let [x, y, z] = p.position;
            // Rz then Rx, then uniform scale.
            let (rx, ry) = (ca * x - sa * y, sa * x + ca * y);
            let (ry2, rz2) = (cb * ry - sb * z, sb * ry + cb * z);
            let position = [scale * rx, scale * ry2, scale * rz2];
            let mut color = p.color;
            if params.color_jitter_sigma > 0.0 {
                for c in color.iter_mut() {
                    *c = (*c + params.color_jitter_sigma * gauss.sample(&mut rng)).clamp(0.0, 1.0);
                }
            }
            Point {
                position,
                color,
                instance_id: p.instance_id,
                semantic_id: p.semantic_id,
            }
        })
        .collect();
    PointCloud::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn identity_params() -> AugmentParams {
        AugmentParams {
            color_jitter_sigma: 0.0,
            scale_range: (1.0, 1.0),
            z_rotation: false,
            x_rotation_sigma_deg: 0.0,
            x_rotation_max_deg: 0.0,
        }
    }

    fn dist(a: &Point, b: &Point) -> f64 {
        let mut s = 0.0;
        for k in 0..3 {
            let d = a.position[k] - b.position[k];
            s += d * d;
        }
        s.sqrt()
    }

    #[test]
    fn two_objects_when_contact_disabled() {
        let cfg = SceneConfig {
            object_count: (2, 2),
            contact_probability: 0.0,
            seed: 5,
            ..SceneConfig::default()
        };
        let cloud = generate_scene(&cfg).unwrap();
        let mut ids: Vec<u32> = cloud.points.iter().filter_map(|p| p.instance_id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids, vec![1, 2]);
        assert!(cloud
            .points
            .iter()
            .any(|p| p.semantic_id == Some(FLOOR_SEMANTIC) && p.instance_id.is_none()));
        assert!(cloud.points.iter().any(|p| p.semantic_id == Some(WALL_SEMANTIC)));
        cloud.validate().unwrap();
    }

    #[test]
    fn same_seed_identical_scene() {
        let cfg = SceneConfig {
            seed: 99,
            ..SceneConfig::default()
        };
        let a = generate_scene(&cfg).unwrap();
        let b = generate_scene(&cfg).unwrap();
        assert_eq!(a, b);
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.emit(&mut ba).unwrap();
        b.emit(&mut bb).unwrap();
        assert_eq!(ba, bb);
    }

    /// Minimal sampled distance between points of different instances.
    fn min_cross_instance_distance(cloud: &PointCloud) -> f64 {
        let mut groups: BTreeMap<u32, Vec<&Point>> = BTreeMap::new();
        for p in &cloud.points {
            if let Some(id) = p.instance_id {
                groups.entry(id).or_default().push(p);
            }
        }
        let ids: Vec<u32> = groups.keys().copied().collect();
        let mut best = f64::INFINITY;
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                for a in &groups[&ids[i]] {
                    for b in &groups[&ids[j]] {
                        best = best.min(dist(a, b));
                    }
                }
            }
        }
        best
    }

    #[test]
    fn contact_fraction_matches_probability() {
        // Oracle: a scene "has contact" when the minimal sampled distance
        // between two instances is below the default voxel size.
        let mut touching = 0;
        let scenes = 100;
        for s in 0..scenes {
            let cfg = SceneConfig {
                contact_probability: 0.5,
                seed: 1000 + s,
                ..SceneConfig::default()
            };
            let cloud = generate_scene(&cfg).unwrap();
            if min_cross_instance_distance(&cloud) < 0.02 {
                touching += 1;
            }
        }
        let frac = touching as f64 / scenes as f64;
        assert!(
            (0.35..=0.65).contains(&frac),
            "touching fraction {frac} outside [0.35, 0.65]"
        );
    }

    #[test]
    fn zero_contact_probability_keeps_objects_apart() {
        for s in 0..20 {
            let cfg = SceneConfig {
                contact_probability: 0.0,
                seed: 2000 + s,
                ..SceneConfig::default()
            };
            let cloud = generate_scene(&cfg).unwrap();
            let d = min_cross_instance_distance(&cloud);
            assert!(d > 0.02, "seed {s}: objects {d} apart");
        }
    }

    #[test]
    fn augment_identity_when_disabled() {
        let cfg = SceneConfig {
            seed: 3,
            ..SceneConfig::default()
        };
        let cloud = generate_scene(&cfg).unwrap();
        let out = augment(&cloud, &identity_params(), 77);
        assert_eq!(cloud, out);
    }

    #[test]
    fn augment_preserves_instance_multiset() {
        let cfg = SceneConfig {
            seed: 4,
            ..SceneConfig::default()
        };
        let cloud = generate_scene(&cfg).unwrap();
        let out = augment(&cloud, &AugmentParams::default(), 12345);
        assert_eq!(cloud.len(), out.len());
        let ids = |c: &PointCloud| {
            let mut v: Vec<Option<u32>> = c.points.iter().map(|p| p.instance_id).collect();
            v.sort_unstable();
            v
        };
        assert_eq!(ids(&cloud), ids(&out));
    }

    #[test]
    fn augment_scales_pairwise_distances_uniformly() {
        let cfg = SceneConfig {
            seed: 8,
            object_count: (2, 3),
            ..SceneConfig::default()
        };
        let cloud = generate_scene(&cfg).unwrap();
        let params = AugmentParams {
            color_jitter_sigma: 0.0,
            z_rotation: false,
            x_rotation_sigma_deg: 0.0,
            ..AugmentParams::default()
        };
        let out = augment(&cloud, &params, 5);
        let s = dist(&out.points[0], &out.points[1]) / dist(&cloud.points[0], &cloud.points[1]);
        assert!((0.8..1.2).contains(&s));
        for step in (2..cloud.len() - 1).step_by(97) {
            let d0 = dist(&cloud.points[step], &cloud.points[step + 1]);
            let d1 = dist(&out.points[step], &out.points[step + 1]);
            if d0 > 1e-9 {
                assert!((d1 / d0 - s).abs() < 1e-12 * s.max(1.0), "{d0} {d1} {s}");
            }
        }
    }

    #[test]
    fn augment_rotation_preserves_distances() {
        let cfg = SceneConfig {
            seed: 21,
            ..SceneConfig::default()
        };
        let cloud = generate_scene(&cfg).unwrap();
        let params = AugmentParams {
            color_jitter_sigma: 0.0,
            scale_range: (1.0, 1.0),
            z_rotation: true,
            x_rotation_sigma_deg: 5.0,
            x_rotation_max_deg: 10.0,
        };
        let out = augment(&cloud, &params, 9);
        for step in (0..cloud.len() - 1).step_by(53) {
            let d0 = dist(&cloud.points[step], &cloud.points[step + 1]);
            let d1 = dist(&out.points[step], &out.points[step + 1]);
            assert!((d1 - d0).abs() < 1e-9, "{d0} vs {d1}");
        }
    }

    #[test]
    fn x_rotation_follows_clipped_gaussian() {
        // Probe point (0,1,0): after Rx only, beta = atan2(z', y').
        let probe = PointCloud::new(vec![Point {
            position: [0.0, 1.0, 0.0],
            color: [0.5; 3],
            instance_id: None,
            semantic_id: None,
        }]);
        let params = AugmentParams {
            color_jitter_sigma: 0.0,
            scale_range: (1.0, 1.0),
            z_rotation: false,
            x_rotation_sigma_deg: 5.0,
            x_rotation_max_deg: 10.0,
        };
        let n = 100_000;
        let max_rad = 10.0f64.to_radians();
        let mut kept = Vec::with_capacity(n);
        let mut clipped = 0usize;
        for seed in 0..n as u64 {
            let out = augment(&probe, &params, seed);
            let p = &out.points[0].position;
            let beta = p[2].atan2(p[1]);
            assert!(
                beta.abs() <= max_rad + 1e-12,
                "rotation {beta} exceeds the 10 degree clip"
            );
            if beta.abs() >= max_rad - 1e-12 {
                clipped += 1;
            } else {
                kept.push(beta.to_degrees());
            }
        }
        // Analytic sigma of N(0, 5 deg) truncated at +-2 sigma:
        // var = sigma^2 * (1 - 2*a*pdf(a) / (2*cdf(a) - 1)) with a = 2.
        let pdf2: f64 = 0.05399096651318806;
        let cdf2: f64 = 0.9772498680518208;
        let expect_sigma = 5.0 * (1.0 - 2.0 * 2.0 * pdf2 / (2.0 * cdf2 - 1.0)).sqrt();
        let mean: f64 = kept.iter().sum::<f64>() / kept.len() as f64;
        let var: f64 = kept.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / kept.len() as f64;
        let sigma = var.sqrt();
        assert!(
            (sigma - expect_sigma).abs() < 0.1,
            "truncated sigma {sigma} vs analytic {expect_sigma}"
        );
        // Tail mass beyond 2 sigma is 2*(1 - cdf(2)) = 4.55%.
        let clip_frac = clipped as f64 / n as f64;
        assert!(
            (clip_frac - 0.0455).abs() < 0.006,
            "clipped fraction {clip_frac}"
        );
    }
}
