mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{line, random_boxes, rng, traces_to_claims};
use mst_core::fusion::{
    build_conflict_graph, compose, fuse_populations, hypothesis_weight, merge_probability, resample, resample_indices,
    sample_merges, ConflictEdge, ConflictGraph, FusionConfig, Hypothesis, Lineage, MergeDraw, ObjectNode, Prediction,
    SampledState, Side,
};
use mst_core::image::Label;
use mst_core::voxel::{ModeFilterConfig, VoxelState};
use proptest::prelude::*;
use rand::seq::index::sample_weighted;
use rand::Rng as _;

const RAW: ModeFilterConfig = ModeFilterConfig { window: 1, consensus: 1.0 };

/// Relabel to 1, 2, ... in order of first occurrence, keeping 0.
fn canonical(labels: &[usize]) -> Vec<Label> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            if l == 0 {
                return 0;
            }
            let next = map.len() as Label + 1;
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Fused labels for a given precedence order and set of merged node pairs,
/// computed directly: a voxel goes to the higher-ranked claimant and takes
/// the id of its merge group.
fn fuse_by_hand(pred: &[Label], samp: &[Label], nodes: &[(Side, Label)], order: &[usize], merged: &[(usize, usize)]) -> Vec<Label> {
    let rank = |n: usize| order.iter().position(|&m| m == n).unwrap();
    let mut group: Vec<usize> = (0..nodes.len()).collect();
    let find = |g: &Vec<usize>, mut n: usize| {
        while g[n] != n {
            n = g[n];
        }
        n
    };
    for &(a, b) in merged {
        let (ra, rb) = (find(&group, a), find(&group, b));
        group[ra.max(rb)] = ra.min(rb);
    }
    let node = |side: Side, l: Label| nodes.iter().position(|&n| n == (side, l)).unwrap();
    let raw: Vec<usize> = pred
        .iter()
        .zip(samp)
        .map(|(&a, &b)| match (a, b) {
            (0, 0) => 0,
            (a, 0) => find(&group, node(Side::Predicted, a)) + 1,
            (0, b) => find(&group, node(Side::Sampled, b)) + 1,
            (a, b) => {
                let (na, nb) = (node(Side::Predicted, a), node(Side::Sampled, b));
                find(&group, if rank(na) > rank(nb) { na } else { nb }) + 1
            }
        })
        .collect();
    canonical(&raw)
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// One object of the first state overlapping two of the second state's three.
fn four_node_pattern(single_is_predicted: bool) -> (VoxelState, VoxelState) {
    let one = line(&[0, 1, 1, 1, 1, 0, 0, 0]);
    let three = line(&[0, 1, 1, 2, 2, 0, 3, 3]);
    if single_is_predicted {
        (one, three)
    } else {
        (three, one)
    }
}

#[test]
fn pattern_graph_is_a_four_node_path() {
    for single in [true, false] {
        let (p, s) = four_node_pattern(single);
        let g = build_conflict_graph(&p, &s).unwrap();
        assert_eq!(g.nodes().len(), 4);
        assert_eq!(g.edges().len(), 2);
        assert!(g.edges().iter().all(|e| e.weight == 0.5));
        // Edges share the single object, so with the isolated node they form a
        // path plus a singleton.
        let comps = g.components();
        assert_eq!(comps.iter().map(Vec::len).collect::<BTreeSet<_>>(), BTreeSet::from([1, 3]));
    }
}

#[test]
fn the_two_illustrated_merge_draws() {
    // Nodes: 0 = the single object, 1..=3 = the other state's objects 1, 2, 3.
    let (p, s) = four_node_pattern(true);
    let g = build_conflict_graph(&p, &s).unwrap();
    let edge = |a: usize, b: usize| g.edges().iter().position(|e| (e.a, e.b) == (a, b)).unwrap();

    // Both conflicts merge: the three overlapping objects become one.
    let all = MergeDraw { order: vec![1, 0, 2], group: vec![0, 0, 0], merged_edges: vec![edge(0, 1), edge(0, 2)] };
    let lone = MergeDraw { order: vec![3], group: vec![3], merged_edges: vec![] };
    let fused = compose(&p, &s, &g, &[all, lone.clone()], RAW).unwrap();
    assert_eq!(fused.labels(), &[0, 1, 1, 1, 1, 0, 2, 2]);

    // Object 1 outranks the single object without merging; the single object
    // merges with object 2.
    let split = MergeDraw { order: vec![2, 0, 1], group: vec![0, 0, 1], merged_edges: vec![edge(0, 2)] };
    let fused = compose(&p, &s, &g, &[split, lone], RAW).unwrap();
    assert_eq!(fused.labels(), &[0, 1, 1, 2, 2, 0, 3, 3]);
    assert_eq!(fused.num_objects(), 3);
}

#[test]
fn pattern_outcomes_follow_the_enumerated_distribution() {
    for single in [true, false] {
        let (p, s) = four_node_pattern(single);
        let g = build_conflict_graph(&p, &s).unwrap();
        let nodes: Vec<(Side, Label)> = g.nodes().iter().map(|n| (n.side, n.label)).collect();
        let comps = g.components();
        let path = comps.iter().find(|c| c.len() == 3).unwrap().clone();
        let lone = comps.iter().find(|c| c.len() == 1).unwrap().clone();

        let mut exact: BTreeMap<Vec<Label>, f64> = BTreeMap::new();
        for order in permutations(&path) {
            let rank = |n: usize| order.iter().position(|&m| m == n).unwrap();
            let probs: Vec<f64> = g
                .edges()
                .iter()
                .map(|e| {
                    let (child, parent) = if rank(e.a) < rank(e.b) { (e.a, e.b) } else { (e.b, e.a) };
                    merge_probability(e.weight, g.nodes()[child].size, g.nodes()[parent].size)
                })
                .collect();
            for mask in 0..4u32 {
                let mut pr = 1.0 / 6.0;
                let mut merged = Vec::new();
                for (k, e) in g.edges().iter().enumerate() {
                    if mask & (1 << k) != 0 {
                        pr *= probs[k];
                        merged.push((e.a, e.b));
                    } else {
                        pr *= 1.0 - probs[k];
                    }
                }
                let mut full_order = lone.clone();
                full_order.extend(&order);
                let out = fuse_by_hand(p.labels(), s.labels(), &nodes, &full_order, &merged);
                *exact.entry(out).or_default() += pr;
            }
        }

        let trials = 10_000;
        let mut seen: BTreeMap<Vec<Label>, usize> = BTreeMap::new();
        let mut r = rng(17);
        for _ in 0..trials {
            let draws: Vec<MergeDraw> = comps.iter().map(|c| sample_merges(&g, c, &mut r)).collect();
            let out = compose(&p, &s, &g, &draws, RAW).unwrap();
            *seen.entry(out.into_labels()).or_default() += 1;
        }
        let keys: BTreeSet<_> = exact.keys().chain(seen.keys()).cloned().collect();
        let tv: f64 = keys
            .iter()
            .map(|k| (exact.get(k).copied().unwrap_or(0.0) - seen.get(k).copied().unwrap_or(0) as f64 / trials as f64).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "single predicted {single}: tv {tv}");
        // Both illustrated outcomes occur.
        assert!(seen.contains_key(&vec![0, 1, 1, 1, 1, 0, 2, 2]));
    }
}

#[test]
fn two_node_merge_rate() {
    // Child of size 4 below a parent of size 8 with IOU 0.5 merges with
    // probability min(1, 0.5 · 8 / 16) = 0.25.
    let g = ConflictGraph::from_parts(
        vec![ObjectNode { side: Side::Predicted, label: 1, size: 4 }, ObjectNode { side: Side::Sampled, label: 1, size: 8 }],
        vec![ConflictEdge { a: 0, b: 1, weight: 0.5 }],
    )
    .unwrap();
    let mut r = rng(2);
    let (mut trials, mut merges) = (0usize, 0usize);
    while trials < 10_000 {
        let d = sample_merges(&g, &[0, 1], &mut r);
        if d.rank_of(0) < d.rank_of(1) {
            trials += 1;
            merges += !d.merged_edges.is_empty() as usize;
        }
    }
    let p = 0.25;
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    let rate = merges as f64 / trials as f64;
    assert!((rate - p).abs() < 3.0 * sigma, "rate {rate}");
}

#[test]
fn resample_inclusion_matches_successive_weighted_draws() {
    let mut r = rng(9);
    let weights: Vec<f64> = (0..100).map(|_| r.random_range(0.01..1.0f64).powi(3)).collect();
    let elite = (0..100).max_by(|&a, &b| weights[a].total_cmp(&weights[b])).unwrap();
    let others: Vec<usize> = (0..100).filter(|&i| i != elite).collect();
    let trials = 10_000;
    let (mut ours, mut oracle) = (vec![0usize; 100], vec![0usize; 100]);
    let mut r2 = rng(10);
    for _ in 0..trials {
        let picked = resample_indices(&weights, 5, &mut r);
        assert_eq!(picked.len(), 5);
        assert_eq!(picked[0], elite);
        assert_eq!(picked.iter().collect::<BTreeSet<_>>().len(), 5);
        picked.iter().for_each(|&i| ours[i] += 1);
        oracle[elite] += 1;
        for k in sample_weighted(&mut r2, others.len(), |k| weights[others[k]], 4).unwrap() {
            oracle[others[k]] += 1;
        }
    }
    let tv: f64 = ours.iter().zip(&oracle).map(|(&a, &b)| (a as f64 - b as f64).abs()).sum::<f64>() / (2.0 * 5.0 * trials as f64);
    assert!(tv < 0.05, "tv {tv}");
}

fn hypothesis(state: VoxelState, weight: f64) -> Hypothesis {
    Hypothesis { state, weight, lineage: Lineage { parent: None, sample: None, t: 0 } }
}

fn random_state(d: [usize; 3], boxes: usize, r: &mut mst_core::rng::Rng) -> VoxelState {
    VoxelState::from_labels(common::grid(d), random_boxes(d, boxes, r)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn window_one_fusion_conserves_claims(seed in 0u64..100_000, bp in 0usize..5, bs in 0usize..5) {
        let mut r = rng(seed);
        let d = [6, 5, 4];
        let (p, s) = (random_state(d, bp, &mut r), random_state(d, bs, &mut r));
        let g = build_conflict_graph(&p, &s).unwrap();
        let draws: Vec<MergeDraw> = g.components().iter().map(|c| sample_merges(&g, c, &mut r)).collect();
        let fused = compose(&p, &s, &g, &draws, RAW).unwrap();
        prop_assert!(traces_to_claims(&p, &s, &g, &draws, &fused));
    }

    #[test]
    fn edgeless_graphs_give_the_disjoint_union(seed in 0u64..100_000, split in 1usize..9) {
        let mut r = rng(seed);
        let d = [10, 4, 3];
        let full = random_state(d, 5, &mut r);
        // Objects left of the split go to one state, the rest to the other.
        let (mut p, mut s) = (full.clone(), full.clone());
        for (idx, (a, b)) in p.labels_mut().iter_mut().zip(s.labels_mut()).enumerate() {
            if idx % 10 < split { *b = 0 } else { *a = 0 }
        }
        let g = build_conflict_graph(&p, &s).unwrap();
        prop_assert!(g.edges().is_empty());
        let draws: Vec<MergeDraw> = g.components().iter().map(|c| sample_merges(&g, c, &mut r)).collect();
        let fused = compose(&p, &s, &g, &draws, RAW).unwrap();
        let nodes: Vec<(Side, Label)> = g.nodes().iter().map(|n| (n.side, n.label)).collect();
        let expect = fuse_by_hand(p.labels(), s.labels(), &nodes, &(0..nodes.len()).collect::<Vec<_>>(), &[]);
        prop_assert_eq!(fused.labels(), expect.as_slice());
        prop_assert_eq!(fused.occupied_count(), p.occupied_count() + s.occupied_count());
    }

    #[test]
    fn resample_returns_n(seed in 0u64..100_000, k in 1usize..30, n in 1usize..12) {
        let mut r = rng(seed);
        let cands: Vec<Hypothesis> = (0..k).map(|_| hypothesis(line(&[1]), r.random_range(0.0..1.0))).collect();
        let out = resample(&cands, n, &mut r).unwrap();
        prop_assert_eq!(out.len(), n);
        prop_assert!(out.iter().any(|h| h.weight == 1.0));
    }

    #[test]
    fn candidate_weights_ignore_population_order(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let d = [5, 4, 3];
        let preds: Vec<Prediction> = (0..3)
            .map(|_| Prediction { hypothesis: hypothesis(random_state(d, 2, &mut r), r.random_range(0.1..1.0)), q_r: r.random_range(0.1..1.0) })
            .collect();
        let samples: Vec<SampledState> = (0..2).map(|_| SampledState { weight: r.random_range(0.1..1.0), state: random_state(d, 2, &mut r) }).collect();
        let cfg = FusionConfig { eta: 2, ..FusionConfig::default() };
        let forward = fuse_populations(&preds, &samples, &cfg, 1, seed).unwrap();
        let reversed: Vec<Prediction> = preds.iter().rev().cloned().collect();
        let backward = fuse_populations(&reversed, &samples, &cfg, 1, seed).unwrap();
        prop_assert_eq!(forward.len(), 12);
        for h in &forward {
            let (j, i) = (h.lineage.parent.unwrap(), h.lineage.sample.unwrap());
            let p = &preds[j];
            prop_assert_eq!(h.weight, hypothesis_weight(p.hypothesis.weight, samples[i].weight, p.q_r, cfg.lambda).unwrap());
            let twin = backward.iter().find(|b| b.lineage.parent == Some(2 - j) && b.lineage.sample == Some(i)).unwrap();
            prop_assert_eq!(twin.weight, h.weight);
        }
    }
}
