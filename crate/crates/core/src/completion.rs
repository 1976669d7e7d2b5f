//! Lifting 2D segments into labeled voxel volumes.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::image::{DepthImage, Label, SegmentationImage};
use crate::par;
use crate::voxel::{in_observed_free_space, GridSpec, VoxelCoord, VoxelState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelClaim {
    pub coord: VoxelCoord,
    /// Distance from the observed surface the claim was derived from.
    pub surface_distance: f64,
}

/// Estimates the full occupied volume of one segment from its visible surface.
pub trait CompletionMethod: Sync {
    fn complete(&self, surface: &[Point3<f64>], cam: &CameraModel, spec: &GridSpec) -> Vec<VoxelClaim>;
}

/// Tabletop heuristic: every surface voxel is extruded straight down toward
/// the support plane `z = 0`, for at most the diagonal of the segment's 3D
/// bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrusionCompletion {
    /// Surface points closer than this to the support plane are taken to be
    /// the plane itself and ignored.
    pub plane_clearance: f64,
}

impl Default for ExtrusionCompletion {
    fn default() -> Self {
        Self { plane_clearance: 0.0 }
    }
}

/// Nudge applied along the viewing ray so a point exactly on a cell face
/// falls into the cell behind the surface.
const SURFACE_NUDGE: f64 = 1e-6;

impl CompletionMethod for ExtrusionCompletion {
    fn complete(&self, surface: &[Point3<f64>], cam: &CameraModel, spec: &GridSpec) -> Vec<VoxelClaim> {
        let points: Vec<Point3<f64>> = surface
            .iter()
            .map(|p| {
                let dir = (p - cam.center()).try_normalize(1e-12).unwrap_or_default();
                let mut q = p + dir * SURFACE_NUDGE;
                q.z = q.z.max(0.0);
                q
            })
            .filter(|p| self.plane_clearance <= 0.0 || p.z >= self.plane_clearance)
            .collect();
        if points.is_empty() {
            return Vec::new();
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in &points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let max_depth = (hi - lo).norm();

        let mut best: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        for p in &points {
            let Some(top) = spec.cell_of(p) else { continue };
            let mut k = top.k as isize;
            while k >= 0 {
                let c = VoxelCoord::new(top.i, top.j, k as usize);
                let center = spec.center(c);
                let dist = (p.z - center.z).max(0.0);
                if c != top && (center.z <= 0.0 || dist > max_depth) {
                    break;
                }
                let e = best.entry(spec.index(c)).or_insert(f64::INFINITY);
                *e = e.min(dist);
                k -= 1;
            }
        }
        best.into_iter()
            .map(|(idx, d)| VoxelClaim { coord: spec.coord(idx), surface_distance: d })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LiftResult {
    pub state: VoxelState,
    /// Segments that had no valid depth and contributed nothing.
    pub skipped: Vec<Label>,
}

/// Complete every segment of `segmentation` into 3D.
///
/// Overlapping claims go to the segment with the nearer observed surface.
/// Claimed voxels that the depth image shows to be free space are dropped.
pub fn lift(
    segmentation: &SegmentationImage,
    depth: &DepthImage,
    cam: &CameraModel,
    spec: &GridSpec,
    method: &dyn CompletionMethod,
) -> Result<LiftResult> {
    if (segmentation.width, segmentation.height) != (depth.width, depth.height)
        || (depth.width, depth.height) != (cam.width, cam.height)
    {
        return Err(Error::InvalidArgument("segmentation, depth and camera sizes differ".into()));
    }
    let labels = segmentation.object_labels();
    let completed = par::map_slice(&labels, |&label| {
        let surface: Vec<Point3<f64>> = segmentation
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .filter_map(|(idx, _)| {
                let d = depth.at_index(idx)?;
                Some(cam.back_project(idx % cam.width, idx / cam.width, d))
            })
            .collect();
        if surface.is_empty() {
            return None;
        }
        Some(method.complete(&surface, cam, spec))
    });

    let mut claims: Vec<Option<(f64, Label)>> = vec![None; spec.len()];
    let mut skipped = Vec::new();
    for (&label, result) in labels.iter().zip(completed) {
        let Some(voxels) = result else {
            skipped.push(label);
            continue;
        };
        for c in voxels {
            if !spec.contains(c.coord) {
                continue;
            }
            let slot = &mut claims[spec.index(c.coord)];
            match slot {
                Some((d, _)) if *d <= c.surface_distance => {}
                _ => *slot = Some((c.surface_distance, label)),
            }
        }
    }
    let margin = spec.resolution;
    let out: Vec<Label> = claims
        .iter()
        .enumerate()
        .map(|(idx, c)| match c {
            Some((_, l)) if !in_observed_free_space(&spec.center_of_index(idx), depth, cam, margin) => *l,
            _ => 0,
        })
        .collect();
    Ok(LiftResult { state: VoxelState::from_labels(spec.clone(), out)?, skipped })
}
