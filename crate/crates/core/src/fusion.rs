//! Fusion of tracked (predicted) hypotheses with freshly sampled ones.
//!
//! Objects of a predicted and a sampled state that overlap form a conflict
//! graph. Each connected component is given a random precedence order; every
//! edge from a lower-ranked child `n1` to a higher-ranked parent `n2` merges
//! with probability `min(1, w_e·|n2|/|n1|²)`, and voxels still contested go to
//! the higher-ranked object.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Label;
use crate::par;
use crate::rng::{child, Rng};
use crate::voxel::{mode_filter, ModeFilterConfig, VoxelState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    /// Index of the predicted hypothesis this one descends from.
    pub parent: Option<usize>,
    /// Index of the fresh sample it was fused with.
    pub sample: Option<usize>,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub state: VoxelState,
    pub weight: f64,
    pub lineage: Lineage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    pub t: usize,
    pub hypotheses: Vec<Hypothesis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Merge draws per (predicted, sampled) pair.
    pub eta: usize,
    /// Exponent on the refinement quality in the weight update.
    pub lambda: f64,
    pub mode_filter: ModeFilterConfig,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { eta: 3, lambda: 3.0, mode_filter: ModeFilterConfig::default() }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eta == 0 {
            return Err(Error::InvalidArgument("eta must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda {} must be positive", self.lambda)));
        }
        self.mode_filter.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Predicted,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectNode {
    pub side: Side,
    pub label: Label,
    /// Voxel count.
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictEdge {
    pub a: usize,
    pub b: usize,
    /// Voxel IOU of the two objects, in (0, 1].
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConflictGraph {
    nodes: Vec<ObjectNode>,
    edges: Vec<ConflictEdge>,
}

impl ConflictGraph {
    pub fn from_parts(nodes: Vec<ObjectNode>, edges: Vec<ConflictEdge>) -> Result<Self> {
        for e in &edges {
            if e.a >= nodes.len() || e.b >= nodes.len() || e.a == e.b {
                return Err(Error::InvalidArgument(format!("edge ({}, {}) is invalid", e.a, e.b)));
            }
            if nodes[e.a].side == nodes[e.b].side {
                return Err(Error::InvalidArgument("conflict edges must join different sources".into()));
            }
            if !(e.weight > 0.0 && e.weight <= 1.0) {
                return Err(Error::InvalidArgument(format!("edge weight {} outside (0, 1]", e.weight)));
            }
        }
        Ok(Self { nodes, edges })
    }

    pub fn nodes(&self) -> &[ObjectNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[ConflictEdge] {
        &self.edges
    }

    /// Connected components as sorted node lists, ordered by smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut uf = UnionFind::new(self.nodes.len());
        for e in &self.edges {
            uf.union(e.a, e.b);
        }
        let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for n in 0..self.nodes.len() {
            by_root.entry(uf.find(n)).or_default().push(n);
        }
        let mut comps: Vec<Vec<usize>> = by_root.into_values().collect();
        comps.sort_by_key(|c| c[0]);
        comps
    }
}

/// Nodes are the nonzero labels of `predicted` (ascending) followed by those
/// of `sampled`; edges join every overlapping pair, weighted by IOU.
pub fn build_conflict_graph(predicted: &VoxelState, sampled: &VoxelState) -> Result<ConflictGraph> {
    if predicted.spec() != sampled.spec() {
        return Err(Error::GridMismatch);
    }
    let sp = predicted.label_sizes();
    let ss = sampled.label_sizes();
    let mut nodes = Vec::new();
    let mut pidx = vec![usize::MAX; sp.len()];
    let mut sidx = vec![usize::MAX; ss.len()];
    for (l, &n) in sp.iter().enumerate().skip(1).filter(|(_, &n)| n > 0) {
        pidx[l] = nodes.len();
        nodes.push(ObjectNode { side: Side::Predicted, label: l as Label, size: n });
    }
    for (l, &n) in ss.iter().enumerate().skip(1).filter(|(_, &n)| n > 0) {
        sidx[l] = nodes.len();
        nodes.push(ObjectNode { side: Side::Sampled, label: l as Label, size: n });
    }
    let mut joint: std::collections::BTreeMap<(Label, Label), usize> = Default::default();
    for (&a, &b) in predicted.labels().iter().zip(sampled.labels()) {
        if a != 0 && b != 0 {
            *joint.entry((a, b)).or_insert(0) += 1;
        }
    }
    let edges = joint
        .into_iter()
        .map(|((a, b), inter)| {
            let union = sp[a as usize] + ss[b as usize] - inter;
            ConflictEdge { a: pidx[a as usize], b: sidx[b as usize], weight: inter as f64 / union as f64 }
        })
        .collect();
    Ok(ConflictGraph { nodes, edges })
}

/// Probability that child `n1` merges into parent `n2`, clamped to 1.
pub fn merge_probability(w_e: f64, child_size: usize, parent_size: usize) -> f64 {
    if child_size == 0 {
        return 1.0;
    }
    let c = child_size as f64;
    (w_e * parent_size as f64 / (c * c)).min(1.0)
}

/// Outcome of one merge draw over a component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeDraw {
    /// Component nodes from lowest to highest precedence.
    pub order: Vec<usize>,
    /// For each entry of `order`, the representative node of its merged group.
    pub group: Vec<usize>,
    /// Indices into the graph's edge list of the merges that fired.
    pub merged_edges: Vec<usize>,
}

impl MergeDraw {
    pub fn rank_of(&self, node: usize) -> Option<usize> {
        self.order.iter().position(|&n| n == node)
    }

    pub fn group_of(&self, node: usize) -> Option<usize> {
        self.rank_of(node).map(|r| self.group[r])
    }
}

/// Draw a precedence order and merges for one connected component.
pub fn sample_merges(graph: &ConflictGraph, component: &[usize], rng: &mut Rng) -> MergeDraw {
    let mut order = component.to_vec();
    order.sort_unstable();
    order.shuffle(rng);
    let mut rank = std::collections::BTreeMap::new();
    for (r, &n) in order.iter().enumerate() {
        rank.insert(n, r);
    }
    let mut uf = UnionFind::new(graph.nodes.len());
    let mut merged_edges = Vec::new();
    for (ei, e) in graph.edges.iter().enumerate() {
        let (Some(&ra), Some(&rb)) = (rank.get(&e.a), rank.get(&e.b)) else { continue };
        let (n1, n2) = if ra < rb { (e.a, e.b) } else { (e.b, e.a) };
        let p = merge_probability(e.weight, graph.nodes[n1].size, graph.nodes[n2].size);
        if rng.random::<f64>() < p {
            uf.union(n1, n2);
            merged_edges.push(ei);
        }
    }
    let group = order.iter().map(|&n| uf.find(n)).collect();
    MergeDraw { order, group, merged_edges }
}

/// Compose a fused state from one merge draw per component, then mode-filter
/// and relabel contiguously.
pub fn compose(
    predicted: &VoxelState,
    sampled: &VoxelState,
    graph: &ConflictGraph,
    draws: &[MergeDraw],
    filter: ModeFilterConfig,
) -> Result<VoxelState> {
    if predicted.spec() != sampled.spec() {
        return Err(Error::GridMismatch);
    }
    let n = graph.nodes.len();
    if n >= Label::MAX as usize {
        return Err(Error::InvalidArgument("too many objects to fuse".into()));
    }
    let mut rank = vec![0usize; n];
    let mut group = (0..n).collect::<Vec<_>>();
    for d in draws {
        for (r, (&node, &g)) in d.order.iter().zip(&d.group).enumerate() {
            rank[node] = r;
            group[node] = g;
        }
    }
    let max_p = predicted.num_objects() as usize;
    let max_s = sampled.num_objects() as usize;
    let mut pidx = vec![usize::MAX; max_p + 1];
    let mut sidx = vec![usize::MAX; max_s + 1];
    for (i, node) in graph.nodes.iter().enumerate() {
        match node.side {
            Side::Predicted => pidx[node.label as usize] = i,
            Side::Sampled => sidx[node.label as usize] = i,
        }
    }
    let labels: Vec<Label> = predicted
        .labels()
        .iter()
        .zip(sampled.labels())
        .map(|(&a, &b)| {
            let winner = match (a, b) {
                (0, 0) => return 0,
                (a, 0) => pidx[a as usize],
                (0, b) => sidx[b as usize],
                (a, b) => {
                    let (na, nb) = (pidx[a as usize], sidx[b as usize]);
                    if rank[na] > rank[nb] {
                        na
                    } else {
                        nb
                    }
                }
            };
            (group[winner] + 1) as Label
        })
        .collect();
    let fused = VoxelState::from_labels(predicted.spec().clone(), labels)?;
    let mut out = mode_filter(&fused, filter)?;
    out.relabel_contiguous();
    Ok(out)
}

/// `w_prev · s_new · q_r^λ`.
pub fn hypothesis_weight(w_prev: f64, s_new: f64, q_r: f64, lambda: f64) -> Result<f64> {
    if !(w_prev > 0.0 && s_new > 0.0 && q_r > 0.0 && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "weight inputs must be positive (w={w_prev}, s={s_new}, q_r={q_r}, lambda={lambda})"
        )));
    }
    Ok(w_prev * s_new * q_r.powf(lambda))
}

/// One fresh sample lifted to 3D together with its sampler weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledState {
    pub weight: f64,
    pub state: VoxelState,
}

/// A tracked hypothesis together with the refinement quality of its prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub hypothesis: Hypothesis,
    pub q_r: f64,
}

/// All `|predicted| · |sampled| · η` fused candidates at step `t`.
///
/// Candidate `(j, i, e)` draws from its own generator derived from `seed`, so
/// candidates can be produced in any order.
pub fn fuse_populations(
    predicted: &[Prediction],
    sampled: &[SampledState],
    cfg: &FusionConfig,
    t: usize,
    seed: u64,
) -> Result<Vec<Hypothesis>> {
    cfg.validate()?;
    let (np, ns, eta) = (predicted.len(), sampled.len(), cfg.eta);
    let graphs: Vec<Vec<Result<ConflictGraph>>> = predicted
        .iter()
        .map(|p| sampled.iter().map(|s| build_conflict_graph(&p.hypothesis.state, &s.state)).collect())
        .collect();
    let candidates = par::map_range(np * ns * eta, |idx| {
        let (j, rest) = (idx / (ns * eta), idx % (ns * eta));
        let (i, e) = (rest / eta, rest % eta);
        let graph = graphs[j][i].as_ref().map_err(|_| Error::GridMismatch)?;
        let mut rng = child(seed, &[j as u64, i as u64, e as u64]);
        let draws: Vec<MergeDraw> = graph.components().iter().map(|c| sample_merges(graph, c, &mut rng)).collect();
        let p = &predicted[j];
        let state = compose(&p.hypothesis.state, &sampled[i].state, graph, &draws, cfg.mode_filter)?;
        let weight = hypothesis_weight(p.hypothesis.weight, sampled[i].weight, p.q_r, cfg.lambda)?;
        Ok(Hypothesis { state, weight, lineage: Lineage { parent: Some(j), sample: Some(i), t } })
    });
    candidates.into_iter().collect()
}

/// Downsample to exactly `n` hypotheses.
///
/// The heaviest candidate is always kept; the other slots are filled by
/// weighted sampling without replacement. With fewer than `n` candidates the
/// list is repeated in descending weight order. Output weights are scaled so
/// the largest is 1.
pub fn resample(candidates: &[Hypothesis], n: usize, rng: &mut Rng) -> Result<Vec<Hypothesis>> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidates to resample".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("population size must be at least 1".into()));
    }
    let chosen = resample_indices(&candidates.iter().map(|h| h.weight).collect::<Vec<_>>(), n, rng);
    let mut out: Vec<Hypothesis> = chosen.into_iter().map(|i| candidates[i].clone()).collect();
    let max = out.iter().map(|h| h.weight).fold(0.0, f64::max);
    for h in &mut out {
        h.weight = if max > 0.0 { (h.weight / max).max(f64::MIN_POSITIVE) } else { 1.0 };
    }
    Ok(out)
}

/// Index form of [`resample`].
pub fn resample_indices(weights: &[f64], n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut by_weight: Vec<usize> = (0..weights.len()).collect();
    by_weight.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    if weights.len() <= n {
        return by_weight.iter().cycle().take(n).copied().collect();
    }
    let elite = by_weight[0];
    let mut chosen = vec![elite];
    let mut remaining: Vec<usize> = (0..weights.len()).filter(|&i| i != elite).collect();
    while chosen.len() < n {
        let total: f64 = remaining.iter().map(|&i| weights[i].max(0.0)).sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pos = remaining.len() - 1;
            for (p, &i) in remaining.iter().enumerate() {
                let w = weights[i].max(0.0);
                if u < w {
                    pos = p;
                    break;
                }
                u -= w;
            }
            // Guard against rounding landing on a zero-weight tail entry.
            while weights[remaining[pos]] <= 0.0 && pos > 0 {
                pos -= 1;
            }
            pos
        } else {
            rng.random_range(0..remaining.len())
        };
        chosen.push(remaining.remove(pick));
    }
    chosen
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Keeps the smaller index as root so groups are order-independent.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}
