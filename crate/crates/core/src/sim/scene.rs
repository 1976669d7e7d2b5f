use nalgebra::{Point3, Vector3};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::image::Label;
use crate::rng::{substream, Stream};

pub const SCENE_SCHEMA: &str = "mst.scene/1";

/// Analytic solid, centered at its local origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Box { half_extents: [f64; 3] },
    /// Axis along local z.
    Cylinder { radius: f64, half_height: f64 },
    Sphere { radius: f64 },
}

const HIT_EPS: f64 = 1e-9;

impl Primitive {
    pub fn contains_local(&self, p: &Point3<f64>) -> bool {
        match *self {
            Primitive::Box { half_extents: h } => p.x.abs() <= h[0] && p.y.abs() <= h[1] && p.z.abs() <= h[2],
            Primitive::Cylinder { radius, half_height } => {
                p.z.abs() <= half_height && p.x * p.x + p.y * p.y <= radius * radius
            }
            Primitive::Sphere { radius } => p.coords.norm_squared() <= radius * radius,
        }
    }

    /// Nearest ray parameter `t > 0` at which `o + t·d` enters the solid.
    pub fn intersect_local(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<f64> {
        match *self {
            Primitive::Box { half_extents: h } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for a in 0..3 {
                    if d[a].abs() < 1e-15 {
                        if o[a].abs() > h[a] {
                            return None;
                        }
                        continue;
                    }
                    let (mut ta, mut tb) = ((-h[a] - o[a]) / d[a], (h[a] - o[a]) / d[a]);
                    if ta > tb {
                        std::mem::swap(&mut ta, &mut tb);
                    }
                    t0 = t0.max(ta);
                    t1 = t1.min(tb);
                }
                nearest_positive(t0, t1)
            }
            Primitive::Sphere { radius } => {
                let (t0, t1) = solve_quadratic(d.norm_squared(), 2.0 * o.coords.dot(d), o.coords.norm_squared() - radius * radius)?;
                nearest_positive(t0, t1)
            }
            Primitive::Cylinder { radius, half_height } => {
                // Interval where the ray is inside the infinite cylinder.
                let a = d.x * d.x + d.y * d.y;
                let (mut t0, mut t1) = if a < 1e-15 {
                    if o.x * o.x + o.y * o.y > radius * radius {
                        return None;
                    }
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    solve_quadratic(a, 2.0 * (o.x * d.x + o.y * d.y), o.x * o.x + o.y * o.y - radius * radius)?
                };
                if d.z.abs() < 1e-15 {
                    if o.z.abs() > half_height {
                        return None;
                    }
                } else {
                    let (mut za, mut zb) = ((-half_height - o.z) / d.z, (half_height - o.z) / d.z);
                    if za > zb {
                        std::mem::swap(&mut za, &mut zb);
                    }
                    t0 = t0.max(za);
                    t1 = t1.min(zb);
                }
                nearest_positive(t0, t1)
            }
        }
    }

    /// Radius of a vertical cylinder bounding the solid for any yaw.
    pub fn footprint_radius(&self) -> f64 {
        match *self {
            Primitive::Box { half_extents: h } => (h[0] * h[0] + h[1] * h[1]).sqrt(),
            Primitive::Cylinder { radius, .. } => radius,
            Primitive::Sphere { radius } => radius,
        }
    }

    /// Height of the local origin above the support plane when resting upright.
    pub fn rest_height(&self) -> f64 {
        match *self {
            Primitive::Box { half_extents: h } => h[2],
            Primitive::Cylinder { half_height, .. } => half_height,
            Primitive::Sphere { radius } => radius,
        }
    }

    /// Radius of a sphere about the local origin enclosing the solid.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Primitive::Box { half_extents: h } => Vector3::from(h).norm(),
            Primitive::Cylinder { radius, half_height } => (radius * radius + half_height * half_height).sqrt(),
            Primitive::Sphere { radius } => radius,
        }
    }
}

fn solve_quadratic(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    // Numerically stable root pair.
    let q = -0.5 * (b + b.signum() * s);
    let (r0, r1) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    Some((r0.min(r1), r0.max(r1)))
}

fn nearest_positive(t0: f64, t1: f64) -> Option<f64> {
    if t0 > t1 || t1 <= HIT_EPS {
        return None;
    }
    Some(if t0 > HIT_EPS { t0 } else { t1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Object {
    pub label: Label,
    pub primitive: Primitive,
    /// Local-to-world pose.
    pub pose: RigidTransform,
}

impl Object {
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        self.primitive.contains_local(&self.pose.inverse().apply(p))
    }

    pub fn intersect(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<f64> {
        let inv = self.pose.inverse();
        self.primitive.intersect_local(&inv.apply(o), &inv.apply_vector(d))
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::from(*self.pose.translation())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    /// Extent of the workspace box `[0, x] × [0, y] × [0, z]` (m).
    pub workspace: [f64; 3],
    pub objects: Vec<Object>,
    /// Whether the plane `z = 0` is rendered as a visible support surface.
    pub support_plane: bool,
}

impl World {
    pub fn empty(workspace: [f64; 3]) -> Self {
        Self { workspace, objects: Vec::new(), support_plane: false }
    }

    pub fn object(&self, label: Label) -> Option<&Object> {
        self.objects.iter().find(|o| o.label == label)
    }

    pub fn object_mut(&mut self, label: Label) -> Option<&mut Object> {
        self.objects.iter_mut().find(|o| o.label == label)
    }

    pub fn validate(&self) -> Result<()> {
        let mut labels: Vec<Label> = self.objects.iter().map(|o| o.label).collect();
        labels.sort_unstable();
        let n = labels.len();
        labels.dedup();
        if labels.len() != n || labels.first() == Some(&0) {
            return Err(Error::InvalidArgument("object labels must be unique and nonzero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut crate::rng::Rng) -> f64 {
        if self.max <= self.min {
            self.min
        } else {
            rng.random_range(self.min..self.max)
        }
    }

    fn valid(&self) -> bool {
        self.min > 0.0 && self.max >= self.min && self.max.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Box,
    Cylinder,
    Sphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrimitiveRanges {
    pub kinds: Vec<PrimitiveKind>,
    pub box_half_extent: Range,
    pub cylinder_radius: Range,
    pub cylinder_half_height: Range,
    pub sphere_radius: Range,
}

impl Default for PrimitiveRanges {
    fn default() -> Self {
        Self {
            kinds: vec![PrimitiveKind::Box, PrimitiveKind::Cylinder, PrimitiveKind::Sphere],
            box_half_extent: Range::new(0.02, 0.06),
            cylinder_radius: Range::new(0.02, 0.05),
            cylinder_half_height: Range::new(0.02, 0.08),
            sphere_radius: Range::new(0.02, 0.05),
        }
    }
}

impl PrimitiveRanges {
    pub fn sample(&self, rng: &mut crate::rng::Rng) -> Primitive {
        match self.kinds[rng.random_range(0..self.kinds.len())] {
            PrimitiveKind::Box => Primitive::Box {
                half_extents: [
                    self.box_half_extent.sample(rng),
                    self.box_half_extent.sample(rng),
                    self.box_half_extent.sample(rng),
                ],
            },
            PrimitiveKind::Cylinder => Primitive::Cylinder {
                radius: self.cylinder_radius.sample(rng),
                half_height: self.cylinder_half_height.sample(rng),
            },
            PrimitiveKind::Sphere => Primitive::Sphere { radius: self.sphere_radius.sample(rng) },
        }
    }
}

/// Layout of a generated scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Objects scattered uniformly over the workspace.
    Random,
    /// A wide occluder hiding a cylinder, a large box at the back left and
    /// clutter in front; comes with its own action script.
    OcclusionBenchmark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub schema: String,
    pub layout: Layout,
    pub workspace: [f64; 3],
    /// Inclusive object count range.
    pub objects: [usize; 2],
    pub primitives: PrimitiveRanges,
    /// Minimum clearance between object footprints (m); may be negative.
    pub min_gap: f64,
    pub placement_attempts: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            schema: SCENE_SCHEMA.into(),
            layout: Layout::Random,
            workspace: [1.0, 1.0, 0.5],
            objects: [2, 20],
            primitives: PrimitiveRanges::default(),
            min_gap: 0.01,
            placement_attempts: 10_000,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCENE_SCHEMA {
            return Err(Error::Format(format!("scene schema {:?}, expected {SCENE_SCHEMA:?}", self.schema)));
        }
        if self.workspace.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("workspace dimensions must be positive".into()));
        }
        if self.objects[0] > self.objects[1] || self.objects[1] >= Label::MAX as usize {
            return Err(Error::InvalidArgument(format!("object count range {:?} is invalid", self.objects)));
        }
        let p = &self.primitives;
        if p.kinds.is_empty()
            || ![p.box_half_extent, p.cylinder_radius, p.cylinder_half_height, p.sphere_radius]
                .iter()
                .all(Range::valid)
        {
            return Err(Error::InvalidArgument("primitive ranges must be positive and ordered".into()));
        }
        Ok(())
    }
}

fn yaw_pose(x: f64, y: f64, z: f64, yaw: f64) -> RigidTransform {
    RigidTransform::from_axis_angle(Vector3::new(0.0, 0.0, yaw), Vector3::new(x, y, z))
}

/// Place `primitive` upright at a random free spot of `region`
/// (`[x0, x1] × [y0, y1]`) respecting the footprint gap to `placed`.
pub(crate) fn place(
    primitive: Primitive,
    region: [f64; 4],
    placed: &[Object],
    min_gap: f64,
    attempts: usize,
    rng: &mut crate::rng::Rng,
) -> Option<RigidTransform> {
    let r = primitive.footprint_radius();
    let [x0, x1, y0, y1] = region;
    if x1 - x0 < 2.0 * r || y1 - y0 < 2.0 * r {
        return None;
    }
    for _ in 0..attempts {
        let x = rng.random_range(x0 + r..=x1 - r);
        let y = rng.random_range(y0 + r..=y1 - r);
        let clear = placed.iter().all(|o| {
            let c = o.center();
            let d = ((c.x - x).powi(2) + (c.y - y).powi(2)).sqrt();
            d >= r + o.primitive.footprint_radius() + min_gap
        });
        if clear {
            let yaw = rng.random_range(0.0..std::f64::consts::PI);
            return Some(yaw_pose(x, y, primitive.rest_height(), yaw));
        }
    }
    None
}

/// Generate a world from `spec`; labels are `1..=K` in placement order.
pub fn generate_scene(spec: &SceneSpec) -> Result<World> {
    spec.validate()?;
    if spec.layout == Layout::OcclusionBenchmark {
        return Ok(super::scenario::occlusion_benchmark(spec)?.world);
    }
    let mut rng = substream(spec.seed, Stream::Scenario, 0);
    let count = rng.random_range(spec.objects[0]..=spec.objects[1]);
    let mut objects: Vec<Object> = Vec::with_capacity(count);
    let region = [0.0, spec.workspace[0], 0.0, spec.workspace[1]];
    let mut attempts = 0;
    while objects.len() < count {
        if attempts >= spec.placement_attempts {
            return Err(Error::PlacementInfeasible(attempts));
        }
        attempts += 1;
        let primitive = spec.primitives.sample(&mut rng);
        if 2.0 * primitive.rest_height() > spec.workspace[2] {
            continue;
        }
        if let Some(pose) = place(primitive, region, &objects, spec.min_gap, 1, &mut rng) {
            objects.push(Object { label: (objects.len() + 1) as Label, primitive, pose });
        }
    }
    Ok(World { workspace: spec.workspace, objects, support_plane: true })
}
