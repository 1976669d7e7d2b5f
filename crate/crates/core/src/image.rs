//! Per-pixel images: label segmentations, depth maps and binary masks.
//! All are stored row-major, index `v * width + u`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Label = u16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationImage {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<Label>,
}

impl SegmentationImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, labels: vec![0; width * height] }
    }

    pub fn from_labels(width: usize, height: usize, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} labels for a {width}×{height} image",
                labels.len()
            )));
        }
        Ok(Self { width, height, labels })
    }

    pub fn get(&self, u: usize, v: usize) -> Label {
        self.labels[v * self.width + u]
    }

    /// Sorted distinct nonzero labels.
    pub fn object_labels(&self) -> Vec<Label> {
        let mut seen = vec![false; self.labels.iter().copied().max().unwrap_or(0) as usize + 1];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        seen.iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &s)| s)
            .map(|(l, _)| l as Label)
            .collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn mask_of(&self, label: Label) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l == label).collect(),
        }
    }
}

/// Depth along the camera's optical axis, in meters. `NO_RETURN` marks pixels
/// without a measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
}

impl DepthImage {
    pub const NO_RETURN: f64 = 0.0;

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, depth: vec![Self::NO_RETURN; width * height] }
    }

    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let d = self.depth[v * self.width + u];
        (d.is_finite() && d > 0.0).then_some(d)
    }

    pub fn at_index(&self, idx: usize) -> Option<f64> {
        let d = self.depth[idx];
        (d.is_finite() && d > 0.0).then_some(d)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundingBox {
    pub u_min: usize,
    pub v_min: usize,
    pub u_max: usize,
    pub v_max: usize,
}

impl BoundingBox {
    /// Grows each side by `frac` of the box extent, clamped to the image.
    pub fn dilate(&self, frac: f64, width: usize, height: usize) -> Self {
        let du = ((self.u_max - self.u_min + 1) as f64 * frac).ceil() as usize;
        let dv = ((self.v_max - self.v_min + 1) as f64 * frac).ceil() as usize;
        Self {
            u_min: self.u_min.saturating_sub(du),
            v_min: self.v_min.saturating_sub(dv),
            u_max: (self.u_max + du).min(width - 1),
            v_max: (self.v_max + dv).min(height - 1),
        }
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        u >= self.u_min && u <= self.u_max && v >= self.v_min && v <= self.v_max
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bits[v * self.width + u]
    }

    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let mut bb: Option<BoundingBox> = None;
        for (i, _) in self.bits.iter().enumerate().filter(|(_, &b)| b) {
            let (u, v) = (i % self.width, i / self.width);
            bb = Some(match bb {
                None => BoundingBox { u_min: u, v_min: v, u_max: u, v_max: v },
                Some(b) => BoundingBox {
                    u_min: b.u_min.min(u),
                    v_min: b.v_min.min(v),
                    u_max: b.u_max.max(u),
                    v_max: b.v_max.max(v),
                },
            });
        }
        bb
    }

    /// Morphological dilation (`radius > 0`) or erosion (`radius < 0`) with a
    /// square structuring element.
    pub fn morph(&self, radius: i32) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let r = radius.unsigned_abs() as isize;
        let dilate = radius > 0;
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = Mask::empty(self.width, self.height);
        for v in 0..h {
            for u in 0..w {
                let mut any = false;
                let mut all = true;
                for dv in -r..=r {
                    for du in -r..=r {
                        let (uu, vv) = (u + du, v + dv);
                        let inside = uu >= 0 && vv >= 0 && uu < w && vv < h;
                        let b = inside && self.bits[(vv * w + uu) as usize];
                        any |= b;
                        all &= b;
                    }
                }
                out.bits[(v * w + u) as usize] = if dilate { any } else { all };
            }
        }
        out
    }
}
