use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::scene::World;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::image::Label;

pub const ACTION_SCHEMA: &str = "mst.actions/1";

/// Kinematic rigid motion of one object, spread evenly over `frames` frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub target: Label,
    /// World-frame displacement of the object center (m).
    pub translation: [f64; 3],
    /// Rotation about the object center as a scaled axis (rad).
    #[serde(default)]
    pub rotation: [f64; 3],
    pub frames: usize,
}

impl Action {
    /// The world-frame motion at fraction `s` of the action, for an object
    /// currently centered at `center`.
    pub fn motion_at(&self, center: &Vector3<f64>, s: f64) -> RigidTransform {
        let axis = Vector3::from(self.rotation) * s;
        let rot = RigidTransform::from_axis_angle(axis, Vector3::zeros());
        let to_origin = RigidTransform::from_translation(-center);
        let back = RigidTransform::from_translation(center + Vector3::from(self.translation) * s);
        back.compose(&rot).compose(&to_origin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionScript {
    pub schema: String,
    pub actions: Vec<Action>,
}

impl ActionScript {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { schema: ACTION_SCHEMA.into(), actions }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != ACTION_SCHEMA {
            return Err(Error::Format(format!("action schema {:?}, expected {ACTION_SCHEMA:?}", self.schema)));
        }
        if self.actions.iter().any(|a| a.frames == 0) {
            return Err(Error::InvalidArgument("actions need at least one frame".into()));
        }
        Ok(())
    }
}

/// Frames `1..=frames` of `action` applied to `world`; the last is the
/// resting state after the action. Other objects do not move.
pub fn step_world(world: &World, action: &Action) -> Result<Vec<World>> {
    if action.frames == 0 {
        return Err(Error::InvalidArgument("actions need at least one frame".into()));
    }
    let obj = world
        .object(action.target)
        .ok_or_else(|| Error::InvalidArgument(format!("action targets unknown label {}", action.target)))?;
    let start = obj.pose;
    let center = *start.translation();
    let frames: Vec<World> = (1..=action.frames)
        .map(|f| {
            let s = f as f64 / action.frames as f64;
            let mut w = world.clone();
            let o = w.object_mut(action.target).expect("target exists");
            o.pose = action.motion_at(&center, s).compose(&start);
            w
        })
        .collect();
    let last = frames.last().expect("at least one frame");
    let moved = last.object(action.target).expect("target exists");
    let c = moved.center();
    let r = moved.primitive.footprint_radius();
    let [wx, wy, _] = world.workspace;
    let tol = 1e-9;
    if c.x - r < -tol || c.y - r < -tol || c.x + r > wx + tol || c.y + r > wy + tol {
        return Err(Error::InvalidArgument(format!("action moves object {} out of the workspace", action.target)));
    }
    Ok(frames)
}

/// Resting worlds before and after each action: `len = actions + 1`.
pub fn run_script(world: &World, actions: &[Action]) -> Result<Vec<World>> {
    let mut out = vec![world.clone()];
    for a in actions {
        let frames = step_world(out.last().expect("nonempty"), a)?;
        out.push(frames.into_iter().last().expect("at least one frame"));
    }
    Ok(out)
}
