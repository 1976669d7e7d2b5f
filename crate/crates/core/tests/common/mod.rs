//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use mst_core::image::Label;
use mst_core::pipeline::RunConfig;
use mst_core::rng::Rng;
use mst_core::segtree::{NodeId, SegTree, TreeCut, ValueFunction};
use mst_core::voxel::{GridSpec, VoxelState};
use rand::{Rng as _, SeedableRng};

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Random tree with `n` nodes. Node 0 is the root, every other node hangs
/// below a lower id, and each leaf owns one pixel of a `leaves × 1` image.
pub fn random_tree(n: usize, rng: &mut Rng) -> SegTree {
    let mut parents: Vec<Option<NodeId>> = vec![None];
    for k in 1..n {
        parents.push(Some(rng.random_range(0..k)));
    }
    let mut depth = vec![0usize; n];
    let mut leaf = vec![true; n];
    for k in 1..n {
        let p = parents[k].unwrap();
        depth[k] = depth[p] + 1;
        leaf[p] = false;
    }
    let max_depth = depth.iter().copied().max().unwrap();
    let heights: Vec<f64> =
        (0..n).map(|k| if leaf[k] { 0.0 } else { (max_depth + 1 - depth[k]) as f64 }).collect();
    let leaves: Vec<NodeId> = (0..n).filter(|&k| leaf[k]).collect();
    SegTree::new(leaves.len(), 1, &parents, &heights, leaves, None).unwrap()
}

/// Every valid cut, by testing all `2^n` node subsets: each leaf must have
/// exactly one member on its path to the root.
pub fn brute_force_cuts(tree: &SegTree) -> Vec<TreeCut> {
    let n = tree.len();
    assert!(n <= 20, "subset enumeration over {n} nodes");
    let paths: Vec<u32> = tree
        .leaves()
        .into_iter()
        .map(|leaf| {
            let mut bits = 0u32;
            let mut cur = Some(leaf);
            while let Some(k) = cur {
                bits |= 1 << k;
                cur = tree.node(k).parent;
            }
            bits
        })
        .collect();
    (0u32..1 << n)
        .filter(|set| paths.iter().all(|p| (p & set).count_ones() == 1))
        .map(|set| TreeCut::new((0..n).filter(|k| set & (1 << k) != 0).collect()))
        .collect()
}

/// Normalized posterior `exp(−(v* − v)²/σ²)` over every cut.
pub fn enumerated_posterior(tree: &SegTree, value: &dyn ValueFunction, sigma2: f64) -> BTreeMap<TreeCut, f64> {
    let cuts = brute_force_cuts(tree);
    let values: Vec<f64> = cuts.iter().map(|c| value.evaluate(tree, c)).collect();
    let vstar = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = values.iter().map(|v| (-(vstar - v).powi(2) / sigma2).exp()).collect();
    let z: f64 = raw.iter().sum();
    cuts.into_iter().zip(raw).map(|(c, w)| (c, w / z)).collect()
}

/// Total variation distance between empirical counts and a distribution.
pub fn tv_distance(counts: &BTreeMap<TreeCut, usize>, p: &BTreeMap<TreeCut, f64>) -> f64 {
    let total: usize = counts.values().sum();
    let keys: BTreeSet<&TreeCut> = counts.keys().chain(p.keys()).collect();
    keys.into_iter()
        .map(|k| {
            let e = counts.get(k).copied().unwrap_or(0) as f64 / total as f64;
            (e - p.get(k).copied().unwrap_or(0.0)).abs()
        })
        .sum::<f64>()
        / 2.0
}

/// Weighted coverage by a direct double loop over label pairs, rescanning
/// every voxel for each pair.
pub fn brute_coverage(a: &[Label], b: &[Label]) -> f64 {
    let la: BTreeSet<Label> = a.iter().copied().collect();
    let lb: BTreeSet<Label> = b.iter().copied().collect();
    let mut terms = Vec::new();
    for &x in &la {
        let size = a.iter().filter(|&&l| l == x).count();
        let mut best = 0.0f64;
        for &y in &lb {
            let inter = a.iter().zip(b).filter(|(&p, &q)| p == x && q == y).count();
            let union = a.iter().zip(b).filter(|(&p, &q)| p == x || q == y).count();
            best = best.max(inter as f64 / union as f64);
        }
        terms.push(size as f64 * best);
    }
    terms.sort_by(f64::total_cmp);
    terms.iter().sum::<f64>() / a.len() as f64
}

pub fn brute_quality(a: &[Label], b: &[Label]) -> f64 {
    0.5 * brute_coverage(a, b) + 0.5 * brute_coverage(b, a)
}

/// Labels of a random state made of up to `boxes` axis-aligned boxes,
/// later boxes overwriting earlier ones.
pub fn random_boxes(dims: [usize; 3], boxes: usize, rng: &mut Rng) -> Vec<Label> {
    let mut labels = vec![0 as Label; dims[0] * dims[1] * dims[2]];
    for l in 1..=boxes {
        let lo: Vec<usize> = dims.iter().map(|&d| rng.random_range(0..d)).collect();
        let hi: Vec<usize> = (0..3).map(|a| rng.random_range(lo[a]..dims[a]) + 1).collect();
        for k in lo[2]..hi[2] {
            for j in lo[1]..hi[1] {
                for i in lo[0]..hi[0] {
                    labels[i + dims[0] * (j + dims[1] * k)] = l as Label;
                }
            }
        }
    }
    labels
}

pub fn grid(dims: [usize; 3]) -> GridSpec {
    GridSpec::new(dims, 0.01, [0.0; 3]).unwrap()
}

/// A one-voxel-thick row of labels.
pub fn line(labels: &[Label]) -> VoxelState {
    VoxelState::from_labels(grid([labels.len(), 1, 1]), labels.to_vec()).unwrap()
}

/// 32³ grid at 2 cm with a 128×96 camera and two samples per step.
pub fn small_config(out: &Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.grid = GridSpec::new([32, 32, 32], 0.02, [0.0; 3]).unwrap();
    c.camera.width = 128;
    c.camera.height = 96;
    c.camera.focal = 120.0;
    c.sampler.n = 2;
    c.sampler.burn_in = 10;
    c.output = out.to_path_buf();
    c.dump_states = false;
    c
}

/// Proposal probability `g(to | from)`: pick one of `|from|` nodes, then a
/// direction with probability ½, counting every choice that lands on `to`.
pub fn proposal_probability(tree: &SegTree, from: &TreeCut, to: &TreeCut) -> f64 {
    use mst_core::segtree::{Direction, Move};
    let mut hits = 0usize;
    for &node in from.nodes() {
        for dir in [Direction::Up, Direction::Down] {
            if let Move::Feasible { cut, .. } = tree.move_node(from, node, dir).unwrap() {
                hits += (&cut == to) as usize;
            }
        }
    }
    hits as f64 / (2.0 * from.len() as f64)
}

/// The tree's proposal ratio for some move from `from` that lands on `to`.
fn reverse_ratio(tree: &SegTree, from: &TreeCut, to: &TreeCut) -> Option<f64> {
    use mst_core::segtree::{Direction, Move};
    from.nodes().iter().find_map(|&node| {
        [Direction::Up, Direction::Down].into_iter().find_map(|dir| match tree.move_node(from, node, dir).unwrap() {
            Move::Feasible { cut, g_ratio } if &cut == to => Some(g_ratio),
            _ => None,
        })
    })
}

/// Largest gap between the forward and reverse probability flows
/// `p(c)·g(c′|c)·min(1, α)` over every feasible move, with `p` normalized,
/// both acceptance ratios built from the tree's own proposal ratios, and `g`
/// counted directly.
/// Also returns the number of moves checked and the largest disagreement
/// between the tree's ratio and the counted one.
pub fn detailed_balance(tree: &SegTree, value: &dyn ValueFunction, sigma2: f64) -> (usize, f64, f64) {
    use mst_core::segtree::{Direction, Move};
    let post = enumerated_posterior(tree, value, sigma2);
    let mut checked = 0;
    let (mut flow_err, mut ratio_err) = (0.0f64, 0.0f64);
    for (c, &pc) in &post {
        for &node in c.nodes() {
            for dir in [Direction::Up, Direction::Down] {
                let Move::Feasible { cut: next, g_ratio } = tree.move_node(c, node, dir).unwrap() else { continue };
                let pn = post[&next];
                let g_fwd = proposal_probability(tree, c, &next);
                let g_back = proposal_probability(tree, &next, c);
                ratio_err = ratio_err.max((g_ratio - g_back / g_fwd).abs());
                let reverse = reverse_ratio(tree, &next, c).expect("every move has a reverse");
                let alpha = pn / pc * g_ratio;
                let alpha_back = pc / pn * reverse;
                let forward = pc * g_fwd * alpha.min(1.0);
                let backward = pn * g_back * alpha_back.min(1.0);
                flow_err = flow_err.max((forward - backward).abs());
                checked += 1;
            }
        }
    }
    (checked, flow_err, ratio_err)
}

/// Uniform random rotation axis with angle up to `max_angle` (rad), and a
/// translation drawn uniformly from the ball of radius `max_shift` (m).
pub fn random_transform(rng: &mut Rng, max_angle: f64, max_shift: f64) -> mst_core::geometry::RigidTransform {
    use nalgebra::Vector3;
    let unit = |rng: &mut Rng| loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v;
        }
    };
    let axis = unit(rng).normalize();
    let angle = rng.random_range(0.0..=max_angle);
    let shift = unit(rng) * max_shift;
    mst_core::geometry::RigidTransform::from_axis_angle(axis * angle, shift)
}

/// `n` points spread over the surface of an L-shaped block: a 20 × 12 × 6 cm
/// base with an 8 × 6 × 8 cm tower on one corner.
pub fn l_block_cloud(n: usize, rng: &mut Rng) -> Vec<nalgebra::Point3<f64>> {
    use nalgebra::Point3;
    let boxes = [([0.0, 0.0, 0.0], [0.2, 0.12, 0.06]), ([0.0, 0.0, 0.06], [0.08, 0.06, 0.14])];
    let faces: Vec<(usize, usize, f64)> = boxes
        .iter()
        .enumerate()
        .flat_map(|(b, (lo, hi))| {
            let e = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
            (0..6).map(move |f| (b, f, e[(f / 2 + 1) % 3] * e[(f / 2 + 2) % 3]))
        })
        .collect();
    let total: f64 = faces.iter().map(|f| f.2).sum();
    (0..n)
        .map(|_| {
            let mut pick = rng.random_range(0.0..total);
            let &(b, f, _) = faces.iter().find(|f| {
                pick -= f.2;
                pick < 0.0
            }).unwrap_or(faces.last().unwrap());
            let (lo, hi) = boxes[b];
            let axis = f / 2;
            let mut p = [0.0; 3];
            for a in 0..3 {
                p[a] = if a == axis {
                    if f % 2 == 0 { lo[a] } else { hi[a] }
                } else {
                    rng.random_range(lo[a]..hi[a])
                };
            }
            Point3::new(p[0], p[1], p[2])
        })
        .collect()
}

/// Adds independent zero-mean Gaussian noise of standard deviation `sigma`
/// to each coordinate.
pub fn jitter(points: &[nalgebra::Point3<f64>], sigma: f64, rng: &mut Rng) -> Vec<nalgebra::Point3<f64>> {
    use rand_distr::{Distribution, Normal};
    let n = Normal::new(0.0, sigma).unwrap();
    points.iter().map(|p| nalgebra::Point3::new(p.x + n.sample(rng), p.y + n.sample(rng), p.z + n.sample(rng))).collect()
}

/// Every voxel of each fused label is claimed, in the inputs, by an object
/// of one common merge group, and distinct labels come from distinct groups.
pub fn traces_to_claims(
    pred: &VoxelState,
    samp: &VoxelState,
    g: &mst_core::fusion::ConflictGraph,
    draws: &[mst_core::fusion::MergeDraw],
    fused: &VoxelState,
) -> bool {
    use mst_core::fusion::Side;
    let node = |side: Side, l: Label| g.nodes().iter().position(|n| n.side == side && n.label == l).unwrap();
    let group = |n: usize| draws.iter().find_map(|d| d.group_of(n)).unwrap();
    let mut candidates: BTreeMap<Label, BTreeSet<usize>> = BTreeMap::new();
    for ((&a, &b), &f) in pred.labels().iter().zip(samp.labels()).zip(fused.labels()) {
        let mut claim = BTreeSet::new();
        if a != 0 {
            claim.insert(group(node(Side::Predicted, a)));
        }
        if b != 0 {
            claim.insert(group(node(Side::Sampled, b)));
        }
        if f == 0 {
            if !claim.is_empty() {
                return false;
            }
            continue;
        }
        let entry = candidates.entry(f).or_insert_with(|| claim.clone());
        *entry = entry.intersection(&claim).copied().collect();
        if entry.is_empty() {
            return false;
        }
    }
    // Distinct labels cannot share a group that is their only possible source.
    let singles: Vec<usize> = candidates.values().filter(|c| c.len() == 1).map(|c| *c.iter().next().unwrap()).collect();
    singles.len() == singles.iter().collect::<BTreeSet<_>>().len()
}
