use std::collections::BTreeMap;

use nalgebra::Point3;

use super::{VoxelCoord, VoxelState};
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::image::Label;

/// Per-label rigid motion; labels without an entry stay put.
pub type Trajectory = BTreeMap<Label, RigidTransform>;

/// Move the voxels of `label` through `t` and re-rasterize them.
pub fn apply_transform(x: &VoxelState, label: Label, t: &RigidTransform) -> Result<VoxelState> {
    if label == 0 {
        return Err(Error::InvalidArgument("free space (label 0) cannot be transformed".into()));
    }
    let mut traj = Trajectory::new();
    traj.insert(label, *t);
    Ok(apply_trajectory(x, &traj))
}

/// Apply every motion of `traj` at once.
///
/// Each moved voxel claims the cell nearest to its transformed center; each
/// cell inside the moved footprint also claims the source voxel its center
/// maps back to, which closes the holes that forward splatting leaves under
/// rotation. Competing claims go to the smallest center distance (then the
/// smaller label). Moved objects overwrite static ones, vacated cells become
/// free, and destinations outside the grid are dropped.
pub fn apply_trajectory(x: &VoxelState, traj: &Trajectory) -> VoxelState {
    let moving: Vec<(Label, RigidTransform)> = traj
        .iter()
        .filter(|(&l, t)| l != 0 && !t.is_identity(0.0))
        .map(|(&l, t)| (l, *t))
        .collect();
    if moving.is_empty() {
        return x.clone();
    }
    let spec = x.spec();
    let src = x.labels();
    let mut out = x.clone();
    let mut claims: Vec<Option<(f64, Label)>> = vec![None; spec.len()];
    let mut claim = |idx: usize, dist: f64, label: Label| {
        let slot = &mut claims[idx];
        let better = match slot {
            None => true,
            Some((d, l)) => dist < *d || (dist == *d && label < *l),
        };
        if better {
            *slot = Some((dist, label));
        }
    };

    for &(label, t) in &moving {
        let inv = t.inverse();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut any = false;
        for (idx, &l) in src.iter().enumerate() {
            if l != label {
                continue;
            }
            let p = t.apply(&spec.center_of_index(idx));
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
            any = true;
            if let Some(c) = spec.cell_of(&p) {
                claim(spec.index(c), (p - spec.center(c)).norm(), label);
            }
        }
        if !any {
            continue;
        }
        // Backward fill over the transformed footprint, padded by one cell.
        let pad = spec.resolution;
        let range = |a: usize| {
            let f = |v: f64| ((v - spec.origin[a]) / spec.resolution).floor();
            let a0 = f(lo[a] - pad).max(0.0) as usize;
            let a1 = (f(hi[a] + pad).max(-1.0) + 1.0).min(spec.dims[a] as f64) as usize;
            a0..a1
        };
        for k in range(2) {
            for j in range(1) {
                for i in range(0) {
                    let dst = VoxelCoord::new(i, j, k);
                    let q: Point3<f64> = inv.apply(&spec.center(dst));
                    if let Some(s) = spec.cell_of(&q) {
                        if src[spec.index(s)] == label {
                            claim(spec.index(dst), (q - spec.center(s)).norm(), label);
                        }
                    }
                }
            }
        }
    }

    let labels = out.labels_mut();
    for l in labels.iter_mut() {
        if moving.iter().any(|(m, _)| m == l) {
            *l = 0;
        }
    }
    for (idx, c) in claims.into_iter().enumerate() {
        if let Some((_, l)) = c {
            labels[idx] = l;
        }
    }
    out
}
