use nalgebra::Point3;

use super::VoxelState;
use crate::camera::CameraModel;
use crate::image::DepthImage;
use crate::par;

/// Lower bound on the refinement quality so hypothesis weights stay positive.
pub const Q_R_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct RefineResult {
    pub state: VoxelState,
    /// Fraction of occupied voxels that survived carving, in `[Q_R_FLOOR, 1]`.
    pub q_r: f64,
}

/// True when `p` lies between the camera and the measured surface at the pixel
/// it projects to, at least `margin` meters in front of that surface.
pub fn in_observed_free_space(p: &Point3<f64>, depth: &DepthImage, cam: &CameraModel, margin: f64) -> bool {
    match cam.project_to_pixel(p) {
        Some((u, v, z)) => depth.get(u, v).is_some_and(|d| z < d - margin),
        None => false,
    }
}

/// Clear every occupied voxel whose center is observed to be free space,
/// keeping a one-voxel safety margin in front of the depth surface.
pub fn free_space_refine(x: &VoxelState, depth: &DepthImage, cam: &CameraModel) -> RefineResult {
    let spec = x.spec();
    let margin = spec.resolution;
    let plane = spec.dims[0] * spec.dims[1];
    let mut out = x.clone();
    par::for_each_chunk_mut(out.labels_mut(), plane, |k, slab| {
        for (off, l) in slab.iter_mut().enumerate() {
            if *l == 0 {
                continue;
            }
            let center = spec.center_of_index(k * plane + off);
            if in_observed_free_space(&center, depth, cam, margin) {
                *l = 0;
            }
        }
    });
    let before = x.occupied_count();
    let q_r = if before == 0 {
        1.0
    } else {
        (out.occupied_count() as f64 / before as f64).max(Q_R_FLOOR)
    };
    RefineResult { state: out, q_r }
}
