use nalgebra::{Point3, Vector3};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::render::Render;
use super::scene::World;
use super::{CorrespondenceNoise, MaskNoise};
use crate::camera::CameraModel;
use crate::geometry::RigidTransform;
use crate::image::{BoundingBox, Label, Mask};
use crate::rng::Rng;
use crate::tracking::{Correspondence, CorrespondenceSource, MaskTracker, Observation};

/// Ground truth of one observation: the resting world and its render.
#[derive(Debug, Clone, PartialEq)]
pub struct SimFrame {
    pub world: World,
    pub render: Render,
}

/// A depth visibility check tolerance (m) for correspondences.
const VISIBILITY_TOL: f64 = 0.005;

fn majority_label(frame: &SimFrame, mask: &Mask) -> Option<Label> {
    let mut counts = std::collections::BTreeMap::new();
    for (i, _) in mask.bits.iter().enumerate().filter(|(_, &b)| b) {
        let l = frame.render.labels.labels[i];
        if l != 0 {
            *counts.entry(l).or_insert(0usize) += 1;
        }
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(l, _)| l)
}

/// Mask tracker that looks up the true object under the input mask and
/// returns its true mask in the next frame, optionally corrupted.
pub struct OracleMaskTracker<'a> {
    pub frames: &'a [SimFrame],
    pub noise: MaskNoise,
}

impl MaskTracker for OracleMaskTracker<'_> {
    fn track(&self, prev: &Observation, next: &Observation, mask: &Mask, _bbox: &BoundingBox, rng: &mut Rng) -> Mask {
        let dropped = rng.random::<f64>() < self.noise.dropout;
        let next_frame = &self.frames[next.t];
        let (w, h) = (next_frame.render.labels.width, next_frame.render.labels.height);
        let Some(label) = majority_label(&self.frames[prev.t], mask) else {
            return Mask::empty(w, h);
        };
        if dropped {
            return Mask::empty(w, h);
        }
        next_frame.render.labels.mask_of(label).morph(self.noise.morph_radius)
    }
}

/// Synthetic feature matches between two frames.
///
/// Surface points are drawn from the source mask; each moves with the object
/// it lies on (the support plane is static) and is kept only if it stays
/// visible inside the target mask. Matches get Gaussian noise, and a fraction
/// of destinations is replaced by uniform points in the target's bounding box.
pub struct SimCorrespondences<'a> {
    pub frames: &'a [SimFrame],
    pub cam: &'a CameraModel,
    pub noise: CorrespondenceNoise,
}

fn motion(prev: &World, next: &World, label: Label) -> RigidTransform {
    match (prev.object(label), next.object(label)) {
        (Some(a), Some(b)) if label != 0 => b.pose.compose(&a.pose.inverse()),
        _ => RigidTransform::identity(),
    }
}

impl CorrespondenceSource for SimCorrespondences<'_> {
    fn correspondences(
        &self,
        prev: &Observation,
        next: &Observation,
        mask_prev: &Mask,
        mask_next: &Mask,
        rng: &mut Rng,
    ) -> Vec<Correspondence> {
        let (fa, fb) = (&self.frames[prev.t], &self.frames[next.t]);
        let cam = self.cam;
        let source: Vec<usize> = mask_prev
            .bits
            .iter()
            .enumerate()
            .filter(|(i, &b)| b && fa.render.true_depth.at_index(*i).is_some())
            .map(|(i, _)| i)
            .collect();
        let target: Vec<Point3<f64>> = mask_next
            .bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .filter_map(|(i, _)| fb.render.true_depth.at_index(i).map(|d| cam.back_project(i % cam.width, i / cam.width, d)))
            .collect();
        if source.is_empty() || target.is_empty() || self.noise.count == 0 {
            return Vec::new();
        }
        let mut lo = target[0];
        let mut hi = target[0];
        for p in &target {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let jitter = (self.noise.sigma > 0.0).then(|| Normal::new(0.0, self.noise.sigma).expect("finite sigma"));
        let perturb = |p: Point3<f64>, rng: &mut Rng| match &jitter {
            Some(n) => p + Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng)),
            None => p,
        };

        let mut out = Vec::with_capacity(self.noise.count);
        for _ in 0..self.noise.count * 4 {
            if out.len() == self.noise.count {
                break;
            }
            let i = source[rng.random_range(0..source.len())];
            let (u, v) = (i % cam.width, i / cam.width);
            let label = fa.render.labels.labels[i];
            let p = cam.back_project(u, v, fa.render.true_depth.depth[i]);
            let q = motion(&fa.world, &fb.world, label).apply(&p);
            let Some((u2, v2, z)) = cam.project_to_pixel(&q) else { continue };
            let j = v2 * cam.width + u2;
            let visible = mask_next.bits[j]
                && fb.render.labels.labels[j] == label
                && fb.render.true_depth.at_index(j).is_some_and(|d| (d - z).abs() < VISIBILITY_TOL);
            if !visible {
                continue;
            }
            let src = perturb(p, rng);
            let dst = if rng.random::<f64>() < self.noise.outlier_fraction {
                Point3::new(
                    rng.random_range(lo.x..=hi.x),
                    rng.random_range(lo.y..=hi.y),
                    rng.random_range(lo.z..=hi.z),
                )
            } else {
                perturb(q, rng)
            };
            out.push(Correspondence { src, dst });
        }
        out
    }
}
