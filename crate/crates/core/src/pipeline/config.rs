use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::sampler::SamplerConfig;
use crate::sim::{ActionScript, Layout, NoiseSpec, SceneSpec};
use crate::tracking::TrackConfig;
use crate::voxel::GridSpec;

pub const RUN_SCHEMA: &str = "mst.run/1";

/// Pinhole camera placed with a look-at rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels.
    pub focal: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            eye: [0.32, -0.35, 0.75],
            target: [0.32, 0.32, 0.0],
            up: [0.0, 0.0, 1.0],
            width: 256,
            height: 192,
            focal: 240.0,
        }
    }
}

impl CameraConfig {
    pub fn build(&self) -> Result<CameraModel> {
        CameraModel::look_at(
            Point3::from(self.eye),
            Point3::from(self.target),
            Vector3::from(self.up),
            self.width,
            self.height,
            self.focal,
        )
    }
}

fn default_grid() -> GridSpec {
    GridSpec { dims: [64, 64, 64], resolution: 0.01, origin: [0.0; 3] }
}

fn default_scene() -> SceneSpec {
    SceneSpec {
        layout: Layout::OcclusionBenchmark,
        workspace: [0.64, 0.64, 0.5],
        objects: [4, 8],
        ..SceneSpec::default()
    }
}

/// Everything one pipeline run needs.
///
/// File paths, when given, replace the matching inline section. The scene is
/// always generated from `seed`, whatever seed the scene section carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub schema: String,
    pub run_id: String,
    pub seed: u64,
    pub scene_path: Option<PathBuf>,
    /// Action script; without one the benchmark layout uses its own actions
    /// and a random layout stays static.
    pub actions_path: Option<PathBuf>,
    pub noise_path: Option<PathBuf>,
    pub scene: SceneSpec,
    pub noise: NoiseSpec,
    pub camera: CameraConfig,
    pub grid: GridSpec,
    pub sampler: SamplerConfig,
    pub fusion: FusionConfig,
    pub track: TrackConfig,
    /// Surface points closer than this to the table are not extruded (m).
    pub plane_clearance: f64,
    pub output: PathBuf,
    /// Write one voxel file per hypothesis and step.
    pub dump_states: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: RUN_SCHEMA.into(),
            run_id: "run".into(),
            seed: 0,
            scene_path: None,
            actions_path: None,
            noise_path: None,
            scene: default_scene(),
            noise: NoiseSpec::default(),
            camera: CameraConfig::default(),
            grid: default_grid(),
            sampler: SamplerConfig::default(),
            fusion: FusionConfig::default(),
            track: TrackConfig::default(),
            plane_clearance: 0.015,
            output: PathBuf::from("out"),
            dump_states: true,
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Override one field given a dotted path (`fusion.lambda`) and a value.
    /// The value is parsed as JSON and falls back to a plain string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut root = serde_json::to_value(&*self)?;
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = match slot {
                Value::Object(map) if map.contains_key(part) => map.get_mut(part).expect("key present"),
                Value::Array(items) => match part.parse::<usize>().ok().and_then(|i| items.get_mut(i)) {
                    Some(item) => item,
                    None => return Err(Error::InvalidArgument(format!("no config field {key:?}"))),
                },
                _ => return Err(Error::InvalidArgument(format!("no config field {key:?}"))),
            };
        }
        *slot = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.into()));
        *self = serde_json::from_value(root)
            .map_err(|e| Error::InvalidArgument(format!("bad value for {key:?}: {e}")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != RUN_SCHEMA {
            return Err(Error::Format(format!("run schema {:?}, expected {RUN_SCHEMA:?}", self.schema)));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return Err(Error::InvalidArgument(format!("run id {:?} is not a plain name", self.run_id)));
        }
        for path in [&self.scene_path, &self.actions_path, &self.noise_path].into_iter().flatten() {
            if !path.is_file() {
                return Err(Error::InvalidArgument(format!("{} does not exist", path.display())));
            }
        }
        if !(self.plane_clearance >= 0.0) {
            return Err(Error::InvalidArgument("plane clearance must be non-negative".into()));
        }
        self.grid.validate()?;
        self.sampler.validate()?;
        self.fusion.validate()?;
        self.track.validate()?;
        self.camera.build()?;
        self.scene_spec()?.validate()?;
        self.noise_spec()?.validate()?;
        if let Some(script) = self.action_script()? {
            script.validate()?;
        }
        Ok(())
    }

    /// The scene section (or file), seeded from the run seed.
    pub fn scene_spec(&self) -> Result<SceneSpec> {
        let mut spec: SceneSpec = match &self.scene_path {
            Some(p) => read_json(p)?,
            None => self.scene.clone(),
        };
        spec.seed = self.seed;
        Ok(spec)
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        match &self.noise_path {
            Some(p) => read_json(p),
            None => Ok(self.noise.clone()),
        }
    }

    pub fn action_script(&self) -> Result<Option<ActionScript>> {
        self.actions_path.as_deref().map(read_json).transpose()
    }
}
