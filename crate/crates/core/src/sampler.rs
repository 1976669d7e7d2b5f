//! Metropolis-Hastings sampling of segmentations from a segmentation tree.
//!
//! The chain walks over tree cuts. A proposal picks a cut node uniformly and
//! moves the cut there up or down one level; the target density is
//! `p(c) ∝ exp(−(v(c*) − v(c))² / σ²)` where `c*` is the optimal cut.

use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::SegmentationImage;
use crate::rng::Rng;
use crate::segtree::{optimal_cut, Direction, Move, SegTree, TreeCut, ValueFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Number of samples to emit.
    pub n: usize,
    /// Chain steps between consecutive samples.
    pub autocorrelation: usize,
    pub burn_in: usize,
    /// Posterior variance σ². `None` derives `(0.25 · v(c*)²)²` from the tree.
    pub sigma2: Option<f64>,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n: 5, autocorrelation: 10, burn_in: 50, sigma2: None, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("sample count n must be ≥ 1".into()));
        }
        if self.autocorrelation == 0 {
            return Err(Error::InvalidArgument("autocorrelation steps must be ≥ 1".into()));
        }
        if let Some(s) = self.sigma2 {
            check_sigma2(s)?;
        }
        Ok(())
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sigma2 = {sigma2} must be a positive finite number")))
    }
}

/// Default posterior variance for an optimal value `vstar`.
pub fn default_sigma2(vstar: f64) -> f64 {
    let sigma = 0.25 * vstar * vstar;
    sigma * sigma
}

/// Unnormalized posterior `exp(−(vstar − v)² / σ²)`.
pub fn posterior(value: f64, vstar: f64, sigma2: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    Ok(log_posterior(value, vstar, sigma2).exp())
}

fn log_posterior(value: f64, vstar: f64, sigma2: f64) -> f64 {
    let d = vstar - value;
    -(d * d) / sigma2
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    /// `p(cut)`, at most 1 when `cut` cannot beat the optimum.
    pub weight: f64,
    pub segmentation: SegmentationImage,
    pub cut: TreeCut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    Rejected,
    /// The proposed move does not exist; the chain stays put.
    Infeasible,
}

/// Stateful chain over cuts of one tree.
pub struct MhChain<'a> {
    tree: &'a SegTree,
    value: &'a dyn ValueFunction,
    scores: Option<Vec<f64>>,
    vstar: f64,
    sigma2: f64,
    cut: TreeCut,
    current_value: f64,
}

impl<'a> MhChain<'a> {
    pub fn new(tree: &'a SegTree, value: &'a dyn ValueFunction, start: TreeCut, vstar: f64, sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        tree.validate_cut(&start)?;
        let scores = value.node_scores(tree);
        let mut chain = Self { tree, value, scores, vstar, sigma2, cut: start, current_value: 0.0 };
        chain.current_value = chain.value_of(&chain.cut);
        Ok(chain)
    }

    fn value_of(&self, cut: &TreeCut) -> f64 {
        match &self.scores {
            Some(s) => cut.nodes().iter().map(|&n| s[n]).sum(),
            None => self.value.evaluate(self.tree, cut),
        }
    }

    pub fn cut(&self) -> &TreeCut {
        &self.cut
    }

    pub fn current_value(&self) -> f64 {
        self.current_value
    }

    pub fn posterior(&self) -> f64 {
        log_posterior(self.current_value, self.vstar, self.sigma2).exp()
    }

    /// One proposal/accept step.
    pub fn step(&mut self, rng: &mut Rng) -> StepOutcome {
        let node = self.cut.nodes()[rng.random_range(0..self.cut.len())];
        let dir = if rng.random_bool(0.5) { Direction::Up } else { Direction::Down };
        let Ok(Move::Feasible { cut: proposal, g_ratio }) = self.tree.move_node(&self.cut, node, dir) else {
            return StepOutcome::Infeasible;
        };
        let proposed_value = self.value_of(&proposal);
        let log_alpha = log_posterior(proposed_value, self.vstar, self.sigma2)
            - log_posterior(self.current_value, self.vstar, self.sigma2)
            + g_ratio.ln();
        let u: f64 = rng.random();
        if log_alpha >= 0.0 || u < log_alpha.exp() {
            self.cut = proposal;
            self.current_value = proposed_value;
            StepOutcome::Accepted
        } else {
            StepOutcome::Rejected
        }
    }
}

/// A single Metropolis-Hastings transition from `cut`.
pub fn mh_step(
    cut: &TreeCut,
    tree: &SegTree,
    value: &dyn ValueFunction,
    vstar: f64,
    sigma2: f64,
    rng: &mut Rng,
) -> Result<TreeCut> {
    let mut chain = MhChain::new(tree, value, cut.clone(), vstar, sigma2)?;
    chain.step(rng);
    Ok(chain.cut)
}

/// Draw `cfg.n` weighted segmentations, starting the chain at the optimal cut.
pub fn sample_segmentations_with_rng(
    tree: &SegTree,
    value: &dyn ValueFunction,
    cfg: &SamplerConfig,
    rng: &mut Rng,
) -> Result<Vec<WeightedSample>> {
    cfg.validate()?;
    let best = optimal_cut(tree, value)?;
    let vstar = value.evaluate(tree, &best);
    let sigma2 = cfg.sigma2.unwrap_or_else(|| default_sigma2(vstar));
    let mut chain = MhChain::new(tree, value, best, vstar, sigma2)?;
    for _ in 0..cfg.burn_in {
        chain.step(rng);
    }
    let mut out = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        for _ in 0..cfg.autocorrelation {
            chain.step(rng);
        }
        out.push(WeightedSample {
            weight: chain.posterior(),
            segmentation: tree.apply_cut(chain.cut())?,
            cut: chain.cut().clone(),
        });
    }
    Ok(out)
}

/// As [`sample_segmentations_with_rng`], seeded from `cfg.seed`.
pub fn sample_segmentations(tree: &SegTree, value: &dyn ValueFunction, cfg: &SamplerConfig) -> Result<Vec<WeightedSample>> {
    let mut rng = Rng::seed_from_u64(cfg.seed);
    sample_segmentations_with_rng(tree, value, cfg, &mut rng)
}
