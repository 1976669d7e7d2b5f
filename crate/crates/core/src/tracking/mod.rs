//! Per-object rigid tracking between consecutive observations.
//!
//! For every object of a hypothesis, the projected mask is propagated to the
//! next frame by a [`MaskTracker`], and a rigid motion is fit first from
//! feature correspondences (J-Linkage), then by ICP on the masked depth
//! clouds, falling back to identity when neither fit is trusted.

mod icp;
mod jlinkage;
mod kabsch;

pub use icp::{icp, IcpConfig, IcpResult};
pub use jlinkage::{jlinkage, JLinkageConfig, JLinkageOutcome};
pub use kabsch::{kabsch, pairs_from, residual, rms_residual};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::image::{BoundingBox, DepthImage, Label, Mask};
use crate::par;
use crate::rng::{child, Rng};
use crate::voxel::{project, Trajectory, VoxelState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub src: Point3<f64>,
    pub dst: Point3<f64>,
}

/// One depth measurement at time step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub t: usize,
    pub depth: DepthImage,
}

/// Propagates an object mask from `prev` to `next`.
pub trait MaskTracker: Sync {
    fn track(&self, prev: &Observation, next: &Observation, mask: &Mask, bbox: &BoundingBox, rng: &mut Rng) -> Mask;
}

/// Supplies matched 3D feature points of one object between two frames.
pub trait CorrespondenceSource: Sync {
    fn correspondences(
        &self,
        prev: &Observation,
        next: &Observation,
        mask_prev: &Mask,
        mask_next: &Mask,
        rng: &mut Rng,
    ) -> Vec<Correspondence>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackConfig {
    /// Minimum J-Linkage inlier count (exclusive) to accept a correspondence fit.
    pub thres_inliers: usize,
    /// Maximum ICP fit error (m, exclusive) to accept an ICP fit.
    pub thres_icp: f64,
    pub jlinkage: JLinkageConfig,
    pub icp: IcpConfig,
    /// Fraction by which the mask bounding box grows on each side.
    pub bbox_dilation: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            thres_inliers: 5,
            thres_icp: 0.001,
            jlinkage: JLinkageConfig::default(),
            icp: IcpConfig::default(),
            bbox_dilation: 0.1,
        }
    }
}

impl TrackConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.thres_inliers > 0
            && self.thres_icp > 0.0
            && self.jlinkage.hypotheses > 0
            && self.jlinkage.inlier_radius > 0.0
            && self.icp.max_iterations > 0
            && self.icp.epsilon > 0.0
            && self.bbox_dilation >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("tracking thresholds must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackMethod {
    Correspondence,
    Icp,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub t: usize,
    pub hypothesis: usize,
    pub label: Label,
    pub method: TrackMethod,
    pub inliers: usize,
    pub fit_error: Option<f64>,
    /// Set when neither fit was accepted and the object was held still.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub trajectory: Trajectory,
    pub records: Vec<TrackRecord>,
}

/// Everything `track_objects` reads from the world between two steps.
#[derive(Clone, Copy)]
pub struct TrackInputs<'a> {
    pub prev: &'a Observation,
    pub next: &'a Observation,
    pub cam: &'a CameraModel,
    pub tracker: &'a dyn MaskTracker,
    pub correspondences: &'a dyn CorrespondenceSource,
}

fn masked_cloud(depth: &DepthImage, mask: &Mask, cam: &CameraModel) -> Vec<Point3<f64>> {
    mask.bits
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .filter_map(|(idx, _)| {
            let d = depth.at_index(idx)?;
            Some(cam.back_project(idx % cam.width, idx / cam.width, d))
        })
        .collect()
}

/// Estimate a rigid motion for every object label of `x_t`.
///
/// Labels are processed independently, each with its own generator derived
/// from `seed` and the label, so the result does not depend on scheduling.
pub fn track_objects(
    inputs: TrackInputs<'_>,
    x_t: &VoxelState,
    cfg: &TrackConfig,
    hypothesis: usize,
    seed: u64,
) -> Result<TrackResult> {
    let cam = inputs.cam;
    if (inputs.prev.depth.width, inputs.prev.depth.height) != (cam.width, cam.height)
        || (inputs.next.depth.width, inputs.next.depth.height) != (cam.width, cam.height)
    {
        return Err(Error::InvalidArgument("depth image size differs from camera".into()));
    }
    let s_t = project(x_t, cam);
    let labels = x_t.object_labels();
    let t = inputs.prev.t;

    let results = par::map_slice(&labels, |&label| {
        let mut rng = child(seed, &[label as u64]);
        let identity = |inliers, fit_error| {
            let record = TrackRecord {
                t,
                hypothesis,
                label,
                method: TrackMethod::Identity,
                inliers,
                fit_error,
                fallback: true,
            };
            (RigidTransform::identity(), record)
        };
        let mask = s_t.mask_of(label);
        let Some(bbox) = mask.bounding_box() else {
            return identity(0, None);
        };
        let bbox = bbox.dilate(cfg.bbox_dilation, cam.width, cam.height);
        let mask_next = inputs.tracker.track(inputs.prev, inputs.next, &mask, &bbox, &mut rng);

        let corrs = inputs.correspondences.correspondences(inputs.prev, inputs.next, &mask, &mask_next, &mut rng);
        let mut inliers = 0;
        if let JLinkageOutcome::Consensus { transform, inlier_count } = jlinkage(&corrs, &cfg.jlinkage, &mut rng) {
            inliers = inlier_count;
            if inlier_count > cfg.thres_inliers {
                let record = TrackRecord {
                    t,
                    hypothesis,
                    label,
                    method: TrackMethod::Correspondence,
                    inliers,
                    fit_error: Some(rms_residual(&transform, &corrs)),
                    fallback: false,
                };
                return (transform, record);
            }
        }

        let src = masked_cloud(&inputs.prev.depth, &mask, cam);
        let dst = masked_cloud(&inputs.next.depth, &mask_next, cam);
        match icp(&src, &dst, &cfg.icp) {
            Ok(r) if r.fit_error < cfg.thres_icp => {
                let record = TrackRecord {
                    t,
                    hypothesis,
                    label,
                    method: TrackMethod::Icp,
                    inliers,
                    fit_error: Some(r.fit_error),
                    fallback: false,
                };
                (r.transform, record)
            }
            Ok(r) => identity(inliers, Some(r.fit_error)),
            Err(_) => identity(inliers, None),
        }
    });

    let mut trajectory = Trajectory::new();
    let mut records = Vec::with_capacity(labels.len());
    for (&label, (transform, record)) in labels.iter().zip(results) {
        trajectory.insert(label, transform);
        records.push(record);
    }
    Ok(TrackResult { trajectory, records })
}
