use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

/// Pinhole camera. Camera frame: x right, y down, z along the optical axis.
/// Pixel `(u, v)` covers `[u, u+1) × [v, v+1)`; rays go through pixel centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub world_to_camera: RigidTransform,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        world_to_camera: RigidTransform,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || width == 0 || height == 0 {
            return Err(Error::InvalidArgument("camera needs fx, fy > 0 and a nonempty image".into()));
        }
        Ok(Self { fx, fy, cx, cy, width, height, world_to_camera })
    }

    /// Camera at `eye` looking at `target`, with world `up` projecting to image-up.
    pub fn look_at(
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
        width: usize,
        height: usize,
        focal: f64,
    ) -> Result<Self> {
        let z = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidArgument("eye and target coincide".into()))?;
        let x = z
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidArgument("up is parallel to the view direction".into()))?;
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let world_to_camera = RigidTransform::from_rotation_unchecked(r, -(r * eye.coords));
        Self::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0, width, height, world_to_camera)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn center(&self) -> Point3<f64> {
        self.world_to_camera.inverse().apply(&Point3::origin())
    }

    /// Unnormalized world-frame direction whose camera-frame z component is 1.
    pub fn ray_direction(&self, u: usize, v: usize) -> Vector3<f64> {
        let d = Vector3::new(
            (u as f64 + 0.5 - self.cx) / self.fx,
            (v as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        );
        self.world_to_camera.rotation().transpose() * d
    }

    /// Pixel coordinates (continuous) and camera-frame depth of a world point.
    pub fn project(&self, p: &Point3<f64>) -> Option<(f64, f64, f64)> {
        let c = self.world_to_camera.apply(p);
        if c.z <= 1e-9 {
            return None;
        }
        Some((self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy, c.z))
    }

    /// Integer pixel containing a world point, with its depth.
    pub fn project_to_pixel(&self, p: &Point3<f64>) -> Option<(usize, usize, f64)> {
        let (u, v, z) = self.project(p)?;
        if u < 0.0 || v < 0.0 {
            return None;
        }
        let (ui, vi) = (u.floor() as usize, v.floor() as usize);
        (ui < self.width && vi < self.height).then_some((ui, vi, z))
    }

    /// World point on the ray through pixel `(u, v)` at camera-frame depth `depth`.
    pub fn back_project(&self, u: usize, v: usize, depth: f64) -> Point3<f64> {
        self.center() + self.ray_direction(u, v) * depth
    }
}
