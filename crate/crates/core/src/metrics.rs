//! Symmetric weighted-coverage quality between two segmentations.
//!
//! `C(x_i, x_j) = (1/|V|) Σ_m |O^m_i| · max_α IOU(O^m_i, O^α_j)` sums over all
//! labels of `x_i`, free space included, and `q = ½C(x_i, x_j) + ½C(x_j, x_i)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::{Label, SegmentationImage};
use crate::voxel::VoxelState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Match {
    pub label: Label,
    pub matched: Label,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub q: f64,
    pub c_ij: f64,
    pub c_ji: f64,
    /// Best match in the second argument for every label of the first.
    pub matches: Vec<Match>,
}

struct Contingency {
    sizes_a: Vec<usize>,
    sizes_b: Vec<usize>,
    /// `joint[a * nb + b]` = voxels labeled `a` in the first and `b` in the second.
    joint: Vec<usize>,
    total: usize,
}

impl Contingency {
    fn new(a: &[Label], b: &[Label]) -> Self {
        let na = a.iter().copied().max().unwrap_or(0) as usize + 1;
        let nb = b.iter().copied().max().unwrap_or(0) as usize + 1;
        let mut joint = vec![0usize; na * nb];
        let mut sizes_a = vec![0usize; na];
        let mut sizes_b = vec![0usize; nb];
        for (&la, &lb) in a.iter().zip(b) {
            joint[la as usize * nb + lb as usize] += 1;
            sizes_a[la as usize] += 1;
            sizes_b[lb as usize] += 1;
        }
        Self { sizes_a, sizes_b, joint, total: a.len() }
    }

    fn iou(&self, la: usize, lb: usize) -> f64 {
        let inter = self.joint[la * self.sizes_b.len() + lb];
        let union = self.sizes_a[la] + self.sizes_b[lb] - inter;
        if union == 0 {
            return 1.0;
        }
        inter as f64 / union as f64
    }

    fn best_match(&self, la: usize) -> (usize, f64) {
        let mut best = (0usize, 0.0f64);
        for lb in 0..self.sizes_b.len() {
            let v = self.iou(la, lb);
            if v > best.1 {
                best = (lb, v);
            }
        }
        best
    }

    /// Exactly invariant under relabeling of either argument.
    fn coverage(&self) -> f64 {
        let mut terms: Vec<f64> = (0..self.sizes_a.len())
            .filter(|&la| self.sizes_a[la] > 0)
            .map(|la| self.sizes_a[la] as f64 * self.best_match(la).1)
            .collect();
        terms.sort_by(f64::total_cmp);
        terms.iter().sum::<f64>() / self.total as f64
    }

    fn transposed(&self) -> Self {
        let (na, nb) = (self.sizes_a.len(), self.sizes_b.len());
        let mut joint = vec![0usize; na * nb];
        for a in 0..na {
            for b in 0..nb {
                joint[b * na + a] = self.joint[a * nb + b];
            }
        }
        Self { sizes_a: self.sizes_b.clone(), sizes_b: self.sizes_a.clone(), joint, total: self.total }
    }

    fn matches(&self) -> Vec<Match> {
        (0..self.sizes_a.len())
            .filter(|&la| self.sizes_a[la] > 0)
            .map(|la| {
                let (lb, iou) = self.best_match(la);
                Match { label: la as Label, matched: lb as Label, iou }
            })
            .collect()
    }
}

fn check_len(a: &[Label], b: &[Label]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "label arrays of length {} and {} cannot be compared",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Coverage over raw label arrays of equal length.
pub fn coverage_labels(a: &[Label], b: &[Label]) -> Result<f64> {
    check_len(a, b)?;
    Ok(Contingency::new(a, b).coverage())
}

pub fn quality_labels(a: &[Label], b: &[Label]) -> Result<QualityReport> {
    check_len(a, b)?;
    let forward = Contingency::new(a, b);
    let backward = forward.transposed();
    let c_ij = forward.coverage();
    let c_ji = backward.coverage();
    Ok(QualityReport { q: 0.5 * c_ij + 0.5 * c_ji, c_ij, c_ji, matches: forward.matches() })
}

pub fn coverage(x_i: &VoxelState, x_j: &VoxelState) -> Result<f64> {
    if x_i.spec() != x_j.spec() {
        return Err(Error::GridMismatch);
    }
    coverage_labels(x_i.labels(), x_j.labels())
}

pub fn quality(x_i: &VoxelState, x_j: &VoxelState) -> Result<QualityReport> {
    if x_i.spec() != x_j.spec() {
        return Err(Error::GridMismatch);
    }
    quality_labels(x_i.labels(), x_j.labels())
}

/// Pixel-domain quality for image segmentations.
pub fn quality_2d(s_i: &SegmentationImage, s_j: &SegmentationImage) -> Result<QualityReport> {
    if (s_i.width, s_i.height) != (s_j.width, s_j.height) {
        return Err(Error::InvalidArgument("segmentation sizes differ".into()));
    }
    quality_labels(&s_i.labels, &s_j.labels)
}
