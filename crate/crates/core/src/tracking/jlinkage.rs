//! J-Linkage robust rigid fitting: random minimal-sample hypotheses, per-point
//! preference sets, and agglomerative clustering by Jaccard distance.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::kabsch::{kabsch, residual};
use super::Correspondence;
use crate::geometry::RigidTransform;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JLinkageConfig {
    /// Number of minimal-sample hypotheses.
    pub hypotheses: usize,
    /// Residual (m) under which a correspondence supports a hypothesis.
    pub inlier_radius: f64,
}

impl Default for JLinkageConfig {
    fn default() -> Self {
        Self { hypotheses: 500, inlier_radius: 0.005 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum JLinkageOutcome {
    Consensus { transform: RigidTransform, inlier_count: usize },
    NoConsensus,
}

type PrefSet = Vec<u64>;

fn jaccard_distance(a: &PrefSet, b: &PrefSet) -> f64 {
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.iter().zip(b) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        1.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

pub fn jlinkage(corrs: &[Correspondence], cfg: &JLinkageConfig, rng: &mut Rng) -> JLinkageOutcome {
    let n = corrs.len();
    if n < 3 {
        return JLinkageOutcome::NoConsensus;
    }
    let mut models = Vec::with_capacity(cfg.hypotheses);
    let mut attempts = 0;
    while models.len() < cfg.hypotheses && attempts < cfg.hypotheses * 3 {
        attempts += 1;
        let idx = sample(rng, n, 3);
        let minimal: Vec<Correspondence> = idx.iter().map(|i| corrs[i]).collect();
        if let Ok(t) = kabsch(&minimal) {
            models.push(t);
        }
    }
    if models.is_empty() {
        return JLinkageOutcome::NoConsensus;
    }

    let words = models.len().div_ceil(64);
    let prefs: Vec<PrefSet> = corrs
        .iter()
        .map(|c| {
            let mut set = vec![0u64; words];
            for (h, m) in models.iter().enumerate() {
                if residual(m, c) < cfg.inlier_radius {
                    set[h / 64] |= 1 << (h % 64);
                }
            }
            set
        })
        .collect();

    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut cluster_pref = prefs;
    let mut active = vec![true; n];
    let mut dist = vec![vec![1.0f64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            dist[i][j] = jaccard_distance(&cluster_pref[i], &cluster_pref[j]);
        }
    }
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if active[j] && dist[i][j] < 1.0 && best.is_none_or(|(_, _, d)| dist[i][j] < d) {
                    best = Some((i, j, dist[i][j]));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        active[j] = false;
        let merged: PrefSet = cluster_pref[i].iter().zip(&cluster_pref[j]).map(|(a, b)| a & b).collect();
        cluster_pref[i] = merged;
        for k in 0..n {
            if k == i || !active[k] {
                continue;
            }
            let d = jaccard_distance(&cluster_pref[i], &cluster_pref[k]);
            if k < i {
                dist[k][i] = d;
            } else {
                dist[i][k] = d;
            }
        }
    }

    let largest = (0..n)
        .filter(|&i| active[i])
        .max_by(|&a, &b| members[a].len().cmp(&members[b].len()).then(b.cmp(&a)))
        .expect("at least one cluster");
    if members[largest].len() < 3 {
        return JLinkageOutcome::NoConsensus;
    }
    let cluster: Vec<Correspondence> = members[largest].iter().map(|&i| corrs[i]).collect();
    let Ok(transform) = kabsch(&cluster) else {
        return JLinkageOutcome::NoConsensus;
    };
    let inlier_count = corrs.iter().filter(|c| residual(&transform, c) < cfg.inlier_radius).count();
    JLinkageOutcome::Consensus { transform, inlier_count }
}
