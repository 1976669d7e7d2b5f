use nalgebra::{Point3, Vector3};
use rand_distr::{Distribution, Normal};

use super::scene::World;
use crate::camera::CameraModel;
use crate::image::{DepthImage, Label, SegmentationImage};
use crate::par;
use crate::rng::child;
use crate::voxel::{GridSpec, VoxelState};

/// A rendered frame: measured (noisy) depth plus the noise-free truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Render {
    pub depth: DepthImage,
    pub true_depth: DepthImage,
    pub labels: SegmentationImage,
}

/// Nearest surface along a ray: `(t, label)`, label 0 for the support plane.
pub fn cast(world: &World, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<(f64, Label)> {
    let mut best: Option<(f64, Label)> = None;
    let dn = dir.norm();
    for o in &world.objects {
        // Bounding-sphere rejection before the exact test.
        let oc = o.center() - origin;
        let along = oc.dot(dir) / dn;
        let r = o.primitive.bounding_radius();
        if oc.norm_squared() - along * along > r * r {
            continue;
        }
        if let Some(t) = o.intersect(origin, dir) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, o.label));
            }
        }
    }
    if world.support_plane && dir.z < 0.0 && origin.z > 0.0 {
        let t = -origin.z / dir.z;
        if best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, 0));
        }
    }
    best
}

/// Ray-cast every pixel. Depth noise is `N(0, depth_sigma²)` per pixel, drawn
/// from a per-row generator keyed by `seed`.
pub fn render(world: &World, cam: &CameraModel, depth_sigma: f64, seed: u64) -> Render {
    let origin = cam.center();
    let rows = par::map_range(cam.height, |v| {
        let noise = (depth_sigma > 0.0).then(|| Normal::new(0.0, depth_sigma).expect("finite sigma"));
        let mut rng = child(seed, &[v as u64]);
        let mut out = Vec::with_capacity(cam.width);
        for u in 0..cam.width {
            let dir = cam.ray_direction(u, v);
            match cast(world, &origin, &dir) {
                Some((t, label)) => {
                    let measured = match &noise {
                        Some(n) => (t + n.sample(&mut rng)).max(1e-6),
                        None => t,
                    };
                    out.push((measured, t, label));
                }
                None => out.push((DepthImage::NO_RETURN, DepthImage::NO_RETURN, 0)),
            }
        }
        out
    });
    let n = cam.pixel_count();
    let (mut depth, mut true_depth, mut labels) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (d, t, l) in rows.into_iter().flatten() {
        depth.push(d);
        true_depth.push(t);
        labels.push(l);
    }
    Render {
        depth: DepthImage { width: cam.width, height: cam.height, depth },
        true_depth: DepthImage { width: cam.width, height: cam.height, depth: true_depth },
        labels: SegmentationImage { width: cam.width, height: cam.height, labels },
    }
}

/// Voxel labeled `k` iff its center lies inside object `k` (lowest label on ties).
pub fn ground_truth_voxels(world: &World, spec: &GridSpec) -> VoxelState {
    let mut objects: Vec<_> = world.objects.iter().collect();
    objects.sort_by_key(|o| o.label);
    let inverse: Vec<_> = objects.iter().map(|o| o.pose.inverse()).collect();
    let mut x = VoxelState::empty(spec.clone());
    let plane = spec.dims[0] * spec.dims[1];
    par::for_each_chunk_mut(x.labels_mut(), plane, |k, slab| {
        for (off, l) in slab.iter_mut().enumerate() {
            let p = spec.center_of_index(k * plane + off);
            for (o, inv) in objects.iter().zip(&inverse) {
                if (p - o.center()).norm() <= o.primitive.bounding_radius() && o.primitive.contains_local(&inv.apply(&p)) {
                    *l = o.label;
                    break;
                }
            }
        }
    });
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use crate::sim::scene::{Object, Primitive};

    fn overhead(size: usize) -> CameraModel {
        CameraModel::look_at(
            Point3::new(0.5, 0.5, 1.0),
            Point3::new(0.5, 0.5, 0.0),
            Vector3::y(),
            size,
            size,
            size as f64,
        )
        .unwrap()
    }

    #[test]
    fn empty_world_renders_nothing() {
        let r = render(&World::empty([1.0, 1.0, 0.5]), &overhead(16), 0.0, 0);
        assert!(r.depth.depth.iter().all(|&d| d == DepthImage::NO_RETURN));
        assert!(r.labels.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn centered_sphere_is_a_disk_with_nearest_center() {
        let mut w = World::empty([1.0, 1.0, 0.5]);
        w.objects.push(Object {
            label: 1,
            primitive: Primitive::Sphere { radius: 0.1 },
            pose: RigidTransform::from_translation(Vector3::new(0.5, 0.5, 0.1)),
        });
        let cam = overhead(33);
        let r = render(&w, &cam, 0.0, 0);
        assert!(r.labels.count(1) > 0);
        let (cu, cv) = (16, 16);
        assert_eq!(r.labels.get(cu, cv), 1);
        let center = r.depth.get(cu, cv).unwrap();
        let min = r.depth.depth.iter().copied().filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min);
        assert!((center - min).abs() < 1e-3);
        assert!((center - 0.8).abs() < 1e-3);
    }

    #[test]
    fn depth_noise_is_seeded() {
        let mut w = World::empty([1.0, 1.0, 0.5]);
        w.support_plane = true;
        let cam = overhead(16);
        let a = render(&w, &cam, 0.002, 3);
        assert_eq!(a, render(&w, &cam, 0.002, 3));
        assert_ne!(a.depth, render(&w, &cam, 0.002, 4).depth);
        assert_eq!(a.true_depth, render(&w, &cam, 0.0, 0).depth);
    }

    #[test]
    fn aligned_cube_voxel_count() {
        let mut w = World::empty([1.0, 1.0, 0.5]);
        w.objects.push(Object {
            label: 1,
            primitive: Primitive::Box { half_extents: [0.05; 3] },
            pose: RigidTransform::from_translation(Vector3::new(0.3, 0.3, 0.05)),
        });
        let spec = GridSpec::new([64, 64, 20], 0.01, [0.0; 3]).unwrap();
        let n = ground_truth_voxels(&w, &spec).occupied_count();
        assert!((729..=1331).contains(&n), "{n}");
    }
}
