use std::collections::{BTreeMap, BTreeSet};

use rand::Rng as _;

use super::TreeNoise;
use crate::error::{Error, Result};
use crate::image::{Label, SegmentationImage};
use crate::rng::Rng;
use crate::segtree::{NodeId, SegTree};

/// Marks a region whose pixels span several true labels.
const MIXED: u32 = u32::MAX;

/// Heights: merges inside one true segment lie in `(0, SEGMENT_TOP]`, wrong
/// merges in `(SEGMENT_TOP, UPPER_START)`, all others in `[UPPER_START, 1]`.
const SEGMENT_TOP: f64 = 0.3;
const WRONG_LOW: f64 = 0.35;
const WRONG_HIGH: f64 = 0.65;
const UPPER_START: f64 = 0.7;

struct Builder {
    parents: Vec<Option<NodeId>>,
    heights: Vec<f64>,
    label: Vec<u32>,
    adj: Vec<BTreeSet<NodeId>>,
    active: BTreeSet<NodeId>,
}

impl Builder {
    fn merge(&mut self, a: NodeId, b: NodeId, h: f64) -> NodeId {
        let c = self.parents.len();
        self.parents.push(None);
        self.heights.push(h);
        self.label.push(if self.label[a] == self.label[b] { self.label[a] } else { MIXED });
        self.parents[a] = Some(c);
        self.parents[b] = Some(c);
        let mut adj: BTreeSet<NodeId> = self.adj[a].union(&self.adj[b]).copied().collect();
        adj.remove(&a);
        adj.remove(&b);
        for &n in &adj {
            self.adj[n].remove(&a);
            self.adj[n].remove(&b);
            self.adj[n].insert(c);
        }
        self.adj.push(adj);
        self.active.remove(&a);
        self.active.remove(&b);
        self.active.insert(c);
        c
    }

    fn regions_with(&self, label: u32) -> Vec<NodeId> {
        self.active.iter().copied().filter(|&n| self.label[n] == label).collect()
    }

    /// Adjacent pairs within `set`, falling back to all pairs when none touch.
    fn candidate_pairs(&self, set: &[NodeId]) -> Vec<(NodeId, NodeId)> {
        let members: BTreeSet<NodeId> = set.iter().copied().collect();
        let mut pairs = Vec::new();
        for &a in set {
            for &b in self.adj[a].range(a + 1..) {
                if members.contains(&b) {
                    pairs.push((a, b));
                }
            }
        }
        if pairs.is_empty() && set.len() >= 2 {
            pairs.push((set[0], set[1]));
        }
        pairs
    }
}

fn pick<T: Copy>(items: &[T], rng: &mut Rng) -> T {
    items[rng.random_range(0..items.len())]
}

/// Build a segmentation tree over `truth`.
///
/// Leaves are grid cells split along true segment boundaries. Each true
/// segment is agglomerated into one region first, then regions merge across
/// segments up to the root. With `noise` an object segment may keep its last
/// internal merge until the upper levels (a spurious split) or merge early
/// with a neighbouring object (a wrong merge). The region of label 0 is the
/// tree's background node.
pub fn synth_tree(truth: &SegmentationImage, noise: &TreeNoise, rng: &mut Rng) -> Result<SegTree> {
    if noise.cell == 0 {
        return Err(Error::InvalidArgument("superpixel cell size must be positive".into()));
    }
    let (w, h) = (truth.width, truth.height);
    let mut leaf_ids: BTreeMap<(usize, usize, Label), NodeId> = BTreeMap::new();
    let mut leaf_of_pixel = Vec::with_capacity(w * h);
    let mut label = Vec::new();
    for v in 0..h {
        for u in 0..w {
            let l = truth.get(u, v);
            let next = leaf_ids.len();
            let id = *leaf_ids.entry((u / noise.cell, v / noise.cell, l)).or_insert(next);
            if id == next {
                label.push(l as u32);
            }
            leaf_of_pixel.push(id);
        }
    }
    let n_leaves = leaf_ids.len();
    let mut adj = vec![BTreeSet::new(); n_leaves];
    for v in 0..h {
        for u in 0..w {
            let a = leaf_of_pixel[v * w + u];
            let mut link = |b: NodeId| {
                if a != b {
                    adj[a].insert(b);
                    adj[b].insert(a);
                }
            };
            if u + 1 < w {
                link(leaf_of_pixel[v * w + u + 1]);
            }
            if v + 1 < h {
                link(leaf_of_pixel[(v + 1) * w + u]);
            }
        }
    }
    let mut b = Builder {
        parents: vec![None; n_leaves],
        heights: vec![0.0; n_leaves],
        label,
        adj,
        active: (0..n_leaves).collect(),
    };

    let mut labels: Vec<u32> = b.label.clone();
    labels.sort_unstable();
    labels.dedup();

    // Agglomerate each true segment, possibly holding back its last merge.
    let mut deferred: Vec<u32> = Vec::new();
    for &l in &labels {
        let total = b.regions_with(l).len() - 1;
        let split = l != 0 && total >= 1 && rng.random::<f64>() < noise.spurious_split;
        let merges = if split { total - 1 } else { total };
        if split {
            deferred.push(l);
        }
        for k in 0..merges {
            let pairs = b.candidate_pairs(&b.regions_with(l));
            let (x, y) = pick(&pairs, rng);
            b.merge(x, y, SEGMENT_TOP * (k + 1) as f64 / total as f64);
        }
    }
    let background = labels.first().filter(|&&l| l == 0).map(|_| b.regions_with(0)[0]);

    // Early merges between neighbouring objects.
    let object_labels: Vec<u32> = labels.iter().copied().filter(|&l| l != 0).collect();
    let mut wrong = 0usize;
    for &l in &object_labels {
        if rng.random::<f64>() >= noise.wrong_merge {
            continue;
        }
        let mine = b.regions_with(l);
        let Some(&a) = mine.first() else { continue };
        let others: Vec<NodeId> = b.adj[a]
            .iter()
            .copied()
            .filter(|&n| Some(n) != background && b.label[n] != l && b.active.contains(&n))
            .collect();
        if others.is_empty() {
            continue;
        }
        let other = pick(&others, rng);
        wrong += 1;
        let hgt = WRONG_LOW + (WRONG_HIGH - WRONG_LOW) * wrong as f64 / (object_labels.len() + 1) as f64;
        b.merge(a, other, hgt);
    }

    // Upper levels: held-back splits first, then neighbours, background last.
    let upper = b.active.len().saturating_sub(1);
    let mut k = 0usize;
    let mut next_height = || {
        k += 1;
        UPPER_START + (1.0 - UPPER_START) * k as f64 / upper as f64
    };
    for l in deferred {
        let halves = b.regions_with(l);
        if halves.len() == 2 {
            let hgt = next_height();
            b.merge(halves[0], halves[1], hgt);
        }
    }
    while b.active.len() > 1 {
        let fg: Vec<NodeId> = b.active.iter().copied().filter(|&n| Some(n) != background).collect();
        let mut pairs = Vec::new();
        for &a in &fg {
            for &c in b.adj[a].range(a + 1..) {
                if Some(c) != background && b.active.contains(&c) {
                    pairs.push((a, c));
                }
            }
        }
        let (x, y) = if !pairs.is_empty() {
            pick(&pairs, rng)
        } else if fg.len() >= 2 {
            (fg[0], fg[1])
        } else {
            let all: Vec<NodeId> = b.active.iter().copied().collect();
            (all[0], all[1])
        };
        let hgt = next_height();
        b.merge(x, y, hgt);
    }
    SegTree::new(w, h, &b.parents, &b.heights, leaf_of_pixel, background)
}
