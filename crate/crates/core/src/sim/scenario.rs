use nalgebra::{Point3, Vector3};
use rand::Rng as _;

use super::action::{run_script, Action};
use super::scene::{place, Object, Primitive, SceneSpec, World};
use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::image::Label;
use crate::rng::{substream, Stream};

/// Labels fixed by the occlusion benchmark layout.
pub const OCCLUDER: Label = 1;
pub const HIDDEN: Label = 2;
pub const SIDE: Label = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub world: World,
    pub actions: Vec<Action>,
}

/// Camera used with the benchmark layout: in front of and above a
/// 0.64 m workspace, looking at its center.
pub fn benchmark_camera() -> CameraModel {
    CameraModel::look_at(
        Point3::new(0.32, -0.35, 0.75),
        Point3::new(0.32, 0.32, 0.0),
        Vector3::z(),
        256,
        192,
        240.0,
    )
    .expect("valid benchmark camera")
}

fn upright(primitive: Primitive, x: f64, y: f64) -> RigidTransform {
    RigidTransform::from_translation(Vector3::new(x, y, primitive.rest_height()))
}

/// The occlusion benchmark, scaled to `spec.workspace` (designed for 0.64 m).
///
/// A wide, tall box stands in the middle row and hides a cylinder behind
/// it; a large box sits visible at the back left, and the remaining
/// objects are scattered in the front row. Actions:
/// 1. the box slides right, revealing the hidden cylinder;
/// 2. a front object is pushed;
/// 3. the box slides left in front of the back-left object, occluding it.
pub fn occlusion_benchmark(spec: &SceneSpec) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = substream(spec.seed, Stream::Scenario, 0);
    let s = spec.workspace[0] / 0.64;
    let sy = spec.workspace[1] / 0.64;
    let count = rng.random_range(spec.objects[0].max(3)..=spec.objects[1].max(3));

    let occluder = Primitive::Box { half_extents: [0.11 * s, 0.025 * sy, 0.17 * s] };
    let hidden = Primitive::Cylinder {
        radius: rng.random_range(0.04..0.05) * s,
        half_height: rng.random_range(0.05..0.07) * s,
    };
    let e = rng.random_range(0.09..0.10) * s;
    let side = Primitive::Box { half_extents: [e, e, rng.random_range(0.07..0.08) * s] };
    let mut objects = vec![
        Object { label: OCCLUDER, primitive: occluder, pose: upright(occluder, 0.32 * s, 0.38 * sy) },
        Object { label: HIDDEN, primitive: hidden, pose: upright(hidden, 0.32 * s, 0.50 * sy) },
        Object { label: SIDE, primitive: side, pose: upright(side, 0.12 * s, 0.52 * sy) },
    ];
    let front = [0.02 * s, 0.62 * s, 0.03 * sy, 0.30 * sy];
    let mut attempts = 0;
    while objects.len() < count {
        if attempts >= spec.placement_attempts {
            return Err(Error::PlacementInfeasible(attempts));
        }
        attempts += 1;
        let primitive = spec.primitives.sample(&mut rng);
        if let Some(pose) = place(primitive, front, &objects[3..], spec.min_gap, 1, &mut rng) {
            objects.push(Object { label: (objects.len() + 1) as Label, primitive, pose });
        }
    }
    let world = World { workspace: spec.workspace, objects, support_plane: true };

    let reveal = Action { target: OCCLUDER, translation: [0.20 * s, 0.0, 0.0], rotation: [0.0; 3], frames: 5 };
    let occlude = Action { target: OCCLUDER, translation: [-0.40 * s, 0.0, 0.0], rotation: [0.0; 3], frames: 5 };
    let after_reveal = run_script(&world, &[reveal])?.pop().expect("nonempty");
    let push = push_action(&after_reveal, front, spec.min_gap, &mut rng)?;
    let actions = vec![reveal, push, occlude];
    run_script(&world, &actions)?;
    Ok(Scenario { world, actions })
}

/// A random short push of one front-row object that keeps it clear of the
/// others and inside `region`.
fn push_action(world: &World, region: [f64; 4], min_gap: f64, rng: &mut crate::rng::Rng) -> Result<Action> {
    let movable: Vec<&Object> = world.objects.iter().filter(|o| o.label > SIDE).collect();
    let candidates: Vec<&Object> = if movable.is_empty() {
        world.objects.iter().filter(|o| o.label == SIDE).collect()
    } else {
        movable
    };
    for _ in 0..1000 {
        let target = candidates[rng.random_range(0..candidates.len())];
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let dist = rng.random_range(0.04..0.08);
        let d = Vector3::new(angle.cos() * dist, angle.sin() * dist, 0.0);
        let c = target.center() + d;
        let r = target.primitive.footprint_radius();
        let inside = if target.label == SIDE {
            c.x - r >= 0.0 && c.y - r >= 0.0 && c.x + r <= world.workspace[0] && c.y + r <= world.workspace[1]
        } else {
            c.x - r >= region[0] && c.x + r <= region[1] && c.y - r >= region[2] && c.y + r <= region[3]
        };
        let clear = world.objects.iter().filter(|o| o.label != target.label).all(|o| {
            let oc = o.center();
            ((oc.x - c.x).powi(2) + (oc.y - c.y).powi(2)).sqrt() >= r + o.primitive.footprint_radius() + min_gap
        });
        if inside && clear {
            let yaw = rng.random_range(-0.4..0.4);
            return Ok(Action { target: target.label, translation: [d.x, d.y, 0.0], rotation: [0.0, 0.0, yaw], frames: 5 });
        }
    }
    Err(Error::PlacementInfeasible(1000))
}
