//! Synthetic tabletop world: analytic primitives resting on the plane
//! `z = 0`, a ray-cast depth sensor, scripted rigid actions, and noisy
//! stand-ins for the learned components (segmentation trees, mask tracking
//! and feature matching).

mod action;
mod oracle;
mod render;
mod scenario;
mod scene;
mod tree;

pub use action::{run_script, step_world, Action, ActionScript, ACTION_SCHEMA};
pub use oracle::{OracleMaskTracker, SimCorrespondences, SimFrame};
pub use render::{cast, ground_truth_voxels, render, Render};
pub use scenario::{benchmark_camera, occlusion_benchmark, Scenario, HIDDEN, OCCLUDER, SIDE};
pub use scene::{
    generate_scene, Layout, Object, Primitive, PrimitiveKind, PrimitiveRanges, Range, SceneSpec, World, SCENE_SCHEMA,
};
pub use tree::synth_tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NOISE_SCHEMA: &str = "mst.noise/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeNoise {
    /// Superpixel grid cell edge (px).
    pub cell: usize,
    /// Per object segment probability of a spurious split.
    pub spurious_split: f64,
    /// Per object segment probability of an early merge with a neighbour.
    pub wrong_merge: f64,
}

impl Default for TreeNoise {
    fn default() -> Self {
        Self { cell: 8, spurious_split: 0.1, wrong_merge: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskNoise {
    /// Dilation (> 0) or erosion (< 0) radius in pixels.
    pub morph_radius: i32,
    pub dropout: f64,
}

impl Default for MaskNoise {
    fn default() -> Self {
        Self { morph_radius: 1, dropout: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrespondenceNoise {
    /// Matches requested per object.
    pub count: usize,
    pub outlier_fraction: f64,
    /// Per-coordinate Gaussian noise on matched points (m).
    pub sigma: f64,
}

impl Default for CorrespondenceNoise {
    fn default() -> Self {
        Self { count: 60, outlier_fraction: 0.3, sigma: 0.001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub schema: String,
    /// Gaussian depth noise (m).
    pub depth_sigma: f64,
    pub tree: TreeNoise,
    pub mask: MaskNoise,
    pub correspondences: CorrespondenceNoise,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            schema: NOISE_SCHEMA.into(),
            depth_sigma: 0.002,
            tree: TreeNoise::default(),
            mask: MaskNoise::default(),
            correspondences: CorrespondenceNoise::default(),
        }
    }
}

impl NoiseSpec {
    /// Noise-free sensing and oracles (correspondences still supplied).
    pub fn none() -> Self {
        Self {
            depth_sigma: 0.0,
            tree: TreeNoise { spurious_split: 0.0, wrong_merge: 0.0, ..TreeNoise::default() },
            mask: MaskNoise { morph_radius: 0, dropout: 0.0 },
            correspondences: CorrespondenceNoise { outlier_fraction: 0.0, sigma: 0.0, ..CorrespondenceNoise::default() },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != NOISE_SCHEMA {
            return Err(Error::Format(format!("noise schema {:?}, expected {NOISE_SCHEMA:?}", self.schema)));
        }
        let probs = [
            self.tree.spurious_split,
            self.tree.wrong_merge,
            self.mask.dropout,
            self.correspondences.outlier_fraction,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument("noise probabilities must lie in [0, 1]".into()));
        }
        if !(self.depth_sigma >= 0.0 && self.correspondences.sigma >= 0.0) || self.tree.cell == 0 {
            return Err(Error::InvalidArgument("noise scales must be non-negative and cell size positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use crate::image::{BoundingBox, Mask};
    use crate::rng::Rng;
    use crate::tracking::{jlinkage, kabsch, CorrespondenceSource, JLinkageConfig, JLinkageOutcome, MaskTracker, Observation};
    use nalgebra::Vector3;
    use rand::SeedableRng;

    fn frames(shift: Vector3<f64>) -> (Vec<SimFrame>, crate::camera::CameraModel) {
        let mut w = World::empty([0.64, 0.64, 0.5]);
        w.support_plane = true;
        w.objects.push(Object {
            label: 1,
            primitive: Primitive::Box { half_extents: [0.05, 0.05, 0.05] },
            pose: RigidTransform::from_translation(Vector3::new(0.32, 0.32, 0.05)),
        });
        let mut w2 = w.clone();
        w2.objects[0].pose = RigidTransform::from_translation(shift).compose(&w.objects[0].pose);
        let cam = benchmark_camera();
        let f = vec![
            SimFrame { render: render(&w, &cam, 0.0, 0), world: w },
            SimFrame { render: render(&w2, &cam, 0.0, 0), world: w2 },
        ];
        (f, cam)
    }

    fn obs(t: usize, f: &SimFrame) -> Observation {
        Observation { t, depth: f.render.depth.clone() }
    }

    fn bbox() -> BoundingBox {
        BoundingBox { u_min: 0, v_min: 0, u_max: 1, v_max: 1 }
    }

    #[test]
    fn oracle_masks() {
        let (f, _) = frames(Vector3::new(0.05, 0.0, 0.0));
        let (a, b) = (obs(0, &f[0]), obs(1, &f[1]));
        let m0 = f[0].render.labels.mask_of(1);
        let exact = OracleMaskTracker { frames: &f, noise: MaskNoise { morph_radius: 0, dropout: 0.0 } };
        assert_eq!(exact.track(&a, &b, &m0, &bbox(), &mut Rng::seed_from_u64(0)), f[1].render.labels.mask_of(1));
        let dropped = OracleMaskTracker { frames: &f, noise: MaskNoise { morph_radius: 0, dropout: 1.0 } };
        assert!(dropped.track(&a, &b, &m0, &bbox(), &mut Rng::seed_from_u64(0)).is_empty());
        let eroded = OracleMaskTracker { frames: &f, noise: MaskNoise { morph_radius: -2, dropout: 0.0 } };
        let m = eroded.track(&a, &b, &m0, &bbox(), &mut Rng::seed_from_u64(0));
        assert!(m.area() < f[1].render.labels.count(1));
    }

    #[test]
    fn static_object_has_zero_displacements() {
        let (f, cam) = frames(Vector3::zeros());
        let (a, b) = (obs(0, &f[0]), obs(1, &f[1]));
        let m = f[0].render.labels.mask_of(1);
        let src = SimCorrespondences { frames: &f, cam: &cam, noise: NoiseSpec::none().correspondences };
        let c = src.correspondences(&a, &b, &m, &m, &mut Rng::seed_from_u64(1));
        assert_eq!(c.len(), 60);
        assert!(c.iter().all(|c| (c.src - c.dst).norm() < 1e-12));
    }

    #[test]
    fn known_translation_recovered_by_kabsch() {
        let shift = Vector3::new(0.04, 0.02, 0.0);
        let (f, cam) = frames(shift);
        let (a, b) = (obs(0, &f[0]), obs(1, &f[1]));
        let src = SimCorrespondences { frames: &f, cam: &cam, noise: NoiseSpec::none().correspondences };
        let c = src.correspondences(&a, &b, &f[0].render.labels.mask_of(1), &f[1].render.labels.mask_of(1), &mut Rng::seed_from_u64(2));
        assert!(c.len() >= 30);
        let t = kabsch(&c).unwrap();
        assert!((t.translation() - shift).norm() < 1e-9);
    }

    #[test]
    fn empty_target_mask_gives_no_matches() {
        let (f, cam) = frames(Vector3::zeros());
        let (a, b) = (obs(0, &f[0]), obs(1, &f[1]));
        let src = SimCorrespondences { frames: &f, cam: &cam, noise: CorrespondenceNoise::default() };
        let empty = Mask::empty(cam.width, cam.height);
        assert!(src.correspondences(&a, &b, &f[0].render.labels.mask_of(1), &empty, &mut Rng::seed_from_u64(0)).is_empty());
    }

    #[test]
    fn all_outliers_rarely_reach_consensus() {
        let (f, cam) = frames(Vector3::new(0.03, 0.0, 0.0));
        let (a, b) = (obs(0, &f[0]), obs(1, &f[1]));
        let noise = CorrespondenceNoise { outlier_fraction: 1.0, ..CorrespondenceNoise::default() };
        let src = SimCorrespondences { frames: &f, cam: &cam, noise };
        let (m0, m1) = (f[0].render.labels.mask_of(1), f[1].render.labels.mask_of(1));
        let mut accepted = 0;
        for seed in 0..20 {
            let mut rng = Rng::seed_from_u64(seed);
            let c = src.correspondences(&a, &b, &m0, &m1, &mut rng);
            if let JLinkageOutcome::Consensus { inlier_count, .. } = jlinkage(&c, &JLinkageConfig::default(), &mut rng) {
                if inlier_count > 5 {
                    accepted += 1;
                }
            }
        }
        assert!(accepted <= 2, "{accepted}/20 accepted");
    }

    #[test]
    fn ground_truth_projection_matches_render() {
        let spec = SceneSpec { layout: Layout::OcclusionBenchmark, workspace: [0.64, 0.64, 0.5], objects: [6, 6], seed: 1, ..Default::default() };
        let world = generate_scene(&spec).unwrap();
        let cam = benchmark_camera();
        let grid = crate::voxel::GridSpec::new([64, 64, 64], 0.01, [0.0; 3]).unwrap();
        let gt = ground_truth_voxels(&world, &grid);
        let projected = crate::voxel::project(&gt, &cam);
        let r = render(&world, &cam, 0.0, 0);
        let agree = projected.labels.iter().zip(&r.labels.labels).filter(|(a, b)| a == b).count();
        assert!(agree as f64 >= 0.95 * cam.pixel_count() as f64, "{agree}");
    }

    #[test]
    fn occluder_reduces_occludee_pixels() {
        let cam = benchmark_camera();
        let mut w = World::empty([0.64, 0.64, 0.5]);
        w.support_plane = true;
        let target = Object {
            label: 1,
            primitive: Primitive::Sphere { radius: 0.04 },
            pose: RigidTransform::from_translation(Vector3::new(0.32, 0.45, 0.04)),
        };
        w.objects.push(target);
        let alone = render(&w, &cam, 0.0, 0).labels.count(1);
        w.objects.push(Object {
            label: 2,
            primitive: Primitive::Box { half_extents: [0.06, 0.02, 0.06] },
            pose: RigidTransform::from_translation(Vector3::new(0.32, 0.33, 0.06)),
        });
        assert!(render(&w, &cam, 0.0, 0).labels.count(1) < alone);
    }

    #[test]
    fn noise_spec_validation() {
        assert!(NoiseSpec::default().validate().is_ok());
        assert!(NoiseSpec::none().validate().is_ok());
        let mut bad = NoiseSpec::default();
        bad.mask.dropout = 1.5;
        assert!(bad.validate().is_err());
    }
}
