use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::RunConfig;
use crate::camera::CameraModel;
use crate::completion::{lift, ExtrusionCompletion};
use crate::error::{Error, Result, Stage, StageExt};
use crate::image::Label;
use crate::fusion::{fuse_populations, resample, Hypothesis, Lineage, Prediction, SampledState};
use crate::metrics::quality;
use crate::par;
use crate::rng::{mix, substream, Stream};
use crate::sampler::sample_segmentations_with_rng;
use crate::segtree::RegionCoherence;
use crate::sim::{
    generate_scene, ground_truth_voxels, occlusion_benchmark, render, run_script, synth_tree, Layout, NoiseSpec,
    OracleMaskTracker, SimCorrespondences, SimFrame, World,
};
use crate::tracking::{track_objects, Observation, TrackInputs, TrackRecord};
use crate::voxel::{apply_trajectory, free_space_refine, write_voxel_state, GridSpec, VoxelState};

pub const MANIFEST_SCHEMA: &str = "mst.manifest/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Sampling, tracking and fusion.
    Mst,
    /// Fresh samples at every step, nothing carried over.
    SingleFrame,
    /// Initial samples propagated by tracking alone.
    TrackingOnly,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Mst, Method::SingleFrame, Method::TrackingOnly];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mst => "mst",
            Method::SingleFrame => "single-frame",
            Method::TrackingOnly => "tracking-only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Scores of one step's population against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub t: usize,
    /// Quality of the heaviest hypothesis (lowest index on ties).
    pub max_weight_q: f64,
    pub best_q: f64,
    pub mean_q: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub run_id: String,
    pub method: Method,
    pub seed: u64,
    pub dir: PathBuf,
    pub steps: Vec<StepSummary>,
    /// Population after the last step.
    #[serde(skip)]
    pub hypotheses: Vec<Hypothesis>,
}

impl RunReport {
    pub fn final_step(&self) -> &StepSummary {
        self.steps.last().expect("runs have at least one step")
    }
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub method: String,
    pub seed: u64,
    pub t: usize,
    pub hyp_id: usize,
    pub weight: f64,
    pub q: f64,
    #[serde(rename = "C_ij")]
    pub c_ij: f64,
    #[serde(rename = "C_ji")]
    pub c_ji: f64,
}

/// Simulated observations, ground truth and fresh weighted samples for
/// every step of one configured run. Shared by all methods, so the methods
/// see exactly the same data.
pub struct Session {
    pub config: RunConfig,
    pub camera: CameraModel,
    pub grid: GridSpec,
    pub noise: NoiseSpec,
    pub worlds: Vec<World>,
    pub frames: Vec<SimFrame>,
    pub observations: Vec<Observation>,
    pub truth: Vec<VoxelState>,
    pub samples: Vec<Vec<SampledState>>,
    /// Labels without depth support dropped while lifting, per step and sample.
    pub lift_skips: Vec<Vec<Vec<Label>>>,
}

impl Session {
    pub fn prepare(config: &RunConfig) -> Result<Self> {
        config.validate().stage(Stage::Config)?;
        let camera = config.camera.build().stage(Stage::Config)?;
        let noise = config.noise_spec().stage(Stage::Config)?;
        let grid = config.grid.clone();
        let seed = config.seed;

        let spec = config.scene_spec().stage(Stage::Scene)?;
        let script = config.action_script().stage(Stage::Scene)?;
        let (world, builtin) = match spec.layout {
            Layout::OcclusionBenchmark => {
                let sc = occlusion_benchmark(&spec).stage(Stage::Scene)?;
                (sc.world, sc.actions)
            }
            Layout::Random => (generate_scene(&spec).stage(Stage::Scene)?, Vec::new()),
        };
        let actions = script.map(|s| s.actions).unwrap_or(builtin);
        let worlds = run_script(&world, &actions).stage(Stage::Scene)?;

        let frames: Vec<SimFrame> = par::map_range(worlds.len(), |t| {
            let render_seed = substream(seed, Stream::Sim, t as u64).next_u64();
            SimFrame { render: render(&worlds[t], &camera, noise.depth_sigma, render_seed), world: worlds[t].clone() }
        });
        let observations: Vec<Observation> =
            frames.iter().enumerate().map(|(t, f)| Observation { t, depth: f.render.depth.clone() }).collect();
        let truth: Vec<VoxelState> = worlds.iter().map(|w| ground_truth_voxels(w, &grid)).collect();

        let completion = ExtrusionCompletion { plane_clearance: config.plane_clearance };
        let value = RegionCoherence::default();
        let mut samples = Vec::with_capacity(frames.len());
        let mut lift_skips = Vec::with_capacity(frames.len());
        for (t, frame) in frames.iter().enumerate() {
            let mut tree_rng = substream(seed, Stream::Sim, 1000 + t as u64);
            let tree = synth_tree(&frame.render.labels, &noise.tree, &mut tree_rng).stage(Stage::Sample)?;
            let mut rng = substream(seed, Stream::Sampler, t as u64);
            let drawn = sample_segmentations_with_rng(&tree, &value, &config.sampler, &mut rng).stage(Stage::Sample)?;
            let lifted = par::map_slice(&drawn, |s| lift(&s.segmentation, &frame.render.depth, &camera, &grid, &completion));
            let mut step = Vec::with_capacity(drawn.len());
            let mut skips = Vec::with_capacity(drawn.len());
            for (s, l) in drawn.iter().zip(lifted) {
                let l = l.stage(Stage::Sample)?;
                skips.push(l.skipped);
                step.push(SampledState { weight: s.weight, state: l.state });
            }
            samples.push(step);
            lift_skips.push(skips);
        }
        Ok(Self { config: config.clone(), camera, grid, noise, worlds, frames, observations, truth, samples, lift_skips })
    }

    pub fn steps(&self) -> usize {
        self.frames.len()
    }

    fn initial(&self, t: usize) -> Vec<Hypothesis> {
        self.samples[t]
            .iter()
            .enumerate()
            .map(|(i, s)| Hypothesis { state: s.state.clone(), weight: s.weight, lineage: Lineage { parent: None, sample: Some(i), t } })
            .collect()
    }

    /// Track, move and carve every hypothesis from step `t - 1` into step `t`.
    fn predict(&self, hyps: &[Hypothesis], t: usize) -> Result<(Vec<Prediction>, Vec<TrackRecord>)> {
        let tracker = OracleMaskTracker { frames: &self.frames, noise: self.noise.mask };
        let matcher = SimCorrespondences { frames: &self.frames, cam: &self.camera, noise: self.noise.correspondences };
        let inputs = TrackInputs {
            prev: &self.observations[t - 1],
            next: &self.observations[t],
            cam: &self.camera,
            tracker: &tracker,
            correspondences: &matcher,
        };
        let base = substream(self.config.seed, Stream::Tracking, t as u64).next_u64();
        let idx: Vec<usize> = (0..hyps.len()).collect();
        let tracked = par::map_slice(&idx, |&j| {
            track_objects(inputs, &hyps[j].state, &self.config.track, j, mix(&[base, j as u64]))
        });
        let mut predictions = Vec::with_capacity(hyps.len());
        let mut records = Vec::new();
        for (j, r) in tracked.into_iter().enumerate() {
            let r = r.stage(Stage::Track)?;
            let moved = apply_trajectory(&hyps[j].state, &r.trajectory);
            let refined = free_space_refine(&moved, &self.observations[t].depth, &self.camera);
            records.extend(r.records.into_iter().map(|mut rec| {
                rec.t = t;
                rec
            }));
            predictions.push(Prediction {
                hypothesis: Hypothesis {
                    state: refined.state,
                    weight: hyps[j].weight,
                    lineage: Lineage { parent: Some(j), sample: None, t },
                },
                q_r: refined.q_r,
            });
        }
        Ok((predictions, records))
    }

    fn step(&self, method: Method, prev: &[Hypothesis], t: usize, log: &mut Vec<serde_json::Value>) -> Result<Vec<Hypothesis>> {
        if t == 0 || method == Method::SingleFrame {
            return Ok(self.initial(t));
        }
        let (predictions, records) = self.predict(prev, t)?;
        log.extend(records.iter().map(|r| json!({ "kind": "track", "method": method, "record": r })));
        match method {
            Method::TrackingOnly => {
                let lambda = self.config.fusion.lambda;
                let raw: Vec<f64> = predictions.iter().map(|p| p.hypothesis.weight * p.q_r.powf(lambda)).collect();
                let max = raw.iter().copied().fold(0.0, f64::max);
                Ok(predictions
                    .into_iter()
                    .zip(raw)
                    .map(|(p, w)| Hypothesis {
                        weight: if max > 0.0 { (w / max).max(f64::MIN_POSITIVE) } else { 1.0 },
                        ..p.hypothesis
                    })
                    .collect())
            }
            _ => {
                let mut rng = substream(self.config.seed, Stream::Fusion, t as u64);
                let fuse_seed = rng.next_u64();
                let candidates =
                    fuse_populations(&predictions, &self.samples[t], &self.config.fusion, t, fuse_seed).stage(Stage::Fuse)?;
                log.push(json!({
                    "kind": "fuse",
                    "method": method,
                    "t": t,
                    "candidates": candidates.len(),
                    "q_r": predictions.iter().map(|p| p.q_r).collect::<Vec<_>>(),
                }));
                resample(&candidates, self.config.sampler.n, &mut rng).stage(Stage::Fuse)
            }
        }
    }

    /// Run `method` over every step, writing outputs under
    /// `<output>/<run_id>/<method>/`.
    pub fn run(&self, method: Method) -> Result<RunReport> {
        let dir = self.config.output.join(&self.config.run_id).join(method.name());
        let mut out = Outputs::create(&dir, self.config.dump_states).stage(Stage::Output)?;
        let result = self.run_into(method, &mut out);
        let flushed = out.finish().stage(Stage::Output);
        let mut report = result?;
        flushed?;
        report.dir = dir;
        std::fs::write(report.dir.join("summary.json"), serde_json::to_string_pretty(&report)?)
            .map_err(Error::from)
            .stage(Stage::Output)?;
        Ok(report)
    }

    fn run_into(&self, method: Method, out: &mut Outputs) -> Result<RunReport> {
        let mut hyps: Vec<Hypothesis> = Vec::new();
        let mut steps = Vec::with_capacity(self.steps());
        for t in 0..self.steps() {
            let mut log = Vec::new();
            if t == 0 || method == Method::SingleFrame {
                for (i, skipped) in self.lift_skips[t].iter().enumerate().filter(|(_, s)| !s.is_empty()) {
                    log.push(json!({ "kind": "lift", "method": method, "t": t, "sample": i, "skipped": skipped }));
                }
            }
            let next = self.step(method, &hyps, t, &mut log);
            out.diagnostics(&log).stage(Stage::Output)?;
            hyps = next?;
            let reports = par::map_slice(&hyps, |h| quality(&h.state, &self.truth[t]));
            let mut rows = Vec::with_capacity(hyps.len());
            for (i, (h, r)) in hyps.iter().zip(reports).enumerate() {
                let r = r.stage(Stage::Score)?;
                rows.push(MetricRow {
                    run_id: self.config.run_id.clone(),
                    method: method.name().into(),
                    seed: self.config.seed,
                    t,
                    hyp_id: i,
                    weight: h.weight,
                    q: r.q,
                    c_ij: r.c_ij,
                    c_ji: r.c_ji,
                });
            }
            out.step(method, t, &hyps, &rows).stage(Stage::Output)?;
            steps.push(summarize(t, &rows));
        }
        Ok(RunReport { run_id: self.config.run_id.clone(), method, seed: self.config.seed, dir: PathBuf::new(), steps, hypotheses: hyps })
    }
}

fn summarize(t: usize, rows: &[MetricRow]) -> StepSummary {
    let heaviest = rows.iter().fold(&rows[0], |best, r| if r.weight > best.weight { r } else { best });
    StepSummary {
        t,
        max_weight_q: heaviest.q,
        best_q: rows.iter().map(|r| r.q).fold(f64::NEG_INFINITY, f64::max),
        mean_q: rows.iter().map(|r| r.q).sum::<f64>() / rows.len() as f64,
    }
}

struct Outputs {
    dir: PathBuf,
    dump_states: bool,
    metrics: csv::Writer<File>,
    diagnostics: BufWriter<File>,
}

impl Outputs {
    fn create(dir: &Path, dump_states: bool) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            dump_states,
            metrics: csv::Writer::from_path(dir.join("metrics.csv"))?,
            diagnostics: BufWriter::new(File::create(dir.join("diagnostics.jsonl"))?),
        })
    }

    fn diagnostics(&mut self, lines: &[serde_json::Value]) -> Result<()> {
        for l in lines {
            serde_json::to_writer(&mut self.diagnostics, l)?;
            self.diagnostics.write_all(b"\n")?;
        }
        Ok(())
    }

    fn step(&mut self, method: Method, t: usize, hyps: &[Hypothesis], rows: &[MetricRow]) -> Result<()> {
        for r in rows {
            self.metrics.serialize(r)?;
        }
        self.metrics.flush()?;
        self.diagnostics.flush()?;
        let step_dir = self.dir.join(format!("t{t}"));
        std::fs::create_dir_all(&step_dir)?;
        let mut entries = Vec::with_capacity(hyps.len());
        for (i, (h, r)) in hyps.iter().zip(rows).enumerate() {
            let file = format!("hyp{i}.vox");
            if self.dump_states {
                let mut w = BufWriter::new(File::create(step_dir.join(&file))?);
                write_voxel_state(&h.state, &mut w)?;
                w.flush()?;
            }
            entries.push(json!({
                "id": i,
                "file": if self.dump_states { Some(file) } else { None },
                "weight": h.weight,
                "q": r.q,
                "objects": h.state.object_labels().len(),
                "lineage": h.lineage,
            }));
        }
        let manifest = json!({ "schema": MANIFEST_SCHEMA, "method": method, "t": t, "hypotheses": entries });
        std::fs::write(step_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.metrics.flush()?;
        self.diagnostics.flush()?;
        Ok(())
    }
}

/// Prepare the run and execute the full method.
pub fn run_pipeline(config: &RunConfig) -> Result<RunReport> {
    Session::prepare(config)?.run(Method::Mst)
}

/// Prepare the run and execute one baseline.
pub fn run_baseline(config: &RunConfig, method: Method) -> Result<RunReport> {
    if method == Method::Mst {
        return Err(Error::InvalidArgument("mst is not a baseline".into())).stage(Stage::Config);
    }
    Session::prepare(config)?.run(method)
}

/// Both baselines on one shared set of observations and samples.
pub fn run_baselines(config: &RunConfig) -> Result<Vec<RunReport>> {
    let session = Session::prepare(config)?;
    [Method::SingleFrame, Method::TrackingOnly].into_iter().map(|m| session.run(m)).collect()
}
