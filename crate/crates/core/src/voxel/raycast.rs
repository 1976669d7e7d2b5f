use nalgebra::{Point3, Vector3};

use super::{VoxelCoord, VoxelState};
use crate::camera::CameraModel;
use crate::image::{Label, SegmentationImage};
use crate::par;

/// Walk the ray front to back through the grid cells it crosses (3D DDA) and
/// return the first non-free voxel.
pub fn first_hit(x: &VoxelState, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<(VoxelCoord, Label)> {
    let spec = x.spec();
    let lo = Point3::from(spec.origin);
    let hi = spec.max_corner();

    let mut t_enter = 0.0f64;
    let mut t_exit = f64::INFINITY;
    for a in 0..3 {
        if dir[a].abs() < 1e-300 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (mut t0, mut t1) = ((lo[a] - origin[a]) * inv, (hi[a] - origin[a]) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_enter = t_enter.max(t0);
        t_exit = t_exit.min(t1);
    }
    if t_enter > t_exit {
        return None;
    }

    let res = spec.resolution;
    let entry = origin + dir * t_enter;
    let mut cell = [0isize; 3];
    let mut step = [0isize; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        let f = ((entry[a] - lo[a]) / res).floor() as isize;
        cell[a] = f.clamp(0, spec.dims[a] as isize - 1);
        if dir[a] > 0.0 {
            step[a] = 1;
            let boundary = lo[a] + (cell[a] + 1) as f64 * res;
            t_max[a] = (boundary - origin[a]) / dir[a];
            t_delta[a] = res / dir[a];
        } else if dir[a] < 0.0 {
            step[a] = -1;
            let boundary = lo[a] + cell[a] as f64 * res;
            t_max[a] = (boundary - origin[a]) / dir[a];
            t_delta[a] = -res / dir[a];
        }
    }

    loop {
        let c = VoxelCoord::new(cell[0] as usize, cell[1] as usize, cell[2] as usize);
        let l = x.get(c);
        if l != 0 {
            return Some((c, l));
        }
        let a = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        if t_max[a] > t_exit {
            return None;
        }
        cell[a] += step[a];
        if cell[a] < 0 || cell[a] >= spec.dims[a] as isize {
            return None;
        }
        t_max[a] += t_delta[a];
    }
}

/// Render the label of the first occupied voxel along each pixel's ray.
pub fn project(x: &VoxelState, cam: &CameraModel) -> SegmentationImage {
    let origin = cam.center();
    let rows = par::map_range(cam.height, |v| {
        (0..cam.width)
            .map(|u| first_hit(x, &origin, &cam.ray_direction(u, v)).map_or(0, |(_, l)| l))
            .collect::<Vec<Label>>()
    });
    SegmentationImage {
        width: cam.width,
        height: cam.height,
        labels: rows.into_iter().flatten().collect(),
    }
}
