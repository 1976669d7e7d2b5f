use serde::{Deserialize, Serialize};

use super::VoxelState;
use crate::error::{Error, Result};
use crate::image::Label;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeFilterConfig {
    /// Odd edge length of the cubic neighborhood.
    pub window: usize,
    /// Fraction of the neighborhood the modal label must reach.
    pub consensus: f64,
}

impl Default for ModeFilterConfig {
    fn default() -> Self {
        Self { window: 3, consensus: 0.6 }
    }
}

impl ModeFilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::InvalidArgument(format!("mode filter window {} must be odd", self.window)));
        }
        if !(self.consensus > 0.5 && self.consensus <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "mode filter consensus {} must be in (0.5, 1]",
                self.consensus
            )));
        }
        Ok(())
    }
}

/// Replace each voxel by the modal label of its neighborhood when that label
/// holds at least `consensus` of the (boundary-clamped) neighborhood. Reads
/// the input and writes a fresh output, so all updates are simultaneous.
pub fn mode_filter(x: &VoxelState, cfg: ModeFilterConfig) -> Result<VoxelState> {
    cfg.validate()?;
    if cfg.window == 1 {
        return Ok(x.clone());
    }
    let spec = x.spec();
    let [nx, ny, nz] = spec.dims;
    let r = cfg.window / 2;
    let src = x.labels();
    let mut out = x.clone();
    let plane = nx * ny;
    par::for_each_chunk_mut(out.labels_mut(), plane, |k, slab| {
        let mut counts: Vec<(Label, usize)> = Vec::with_capacity(cfg.window.pow(3));
        let (k0, k1) = (k.saturating_sub(r), (k + r).min(nz - 1));
        for j in 0..ny {
            let (j0, j1) = (j.saturating_sub(r), (j + r).min(ny - 1));
            for i in 0..nx {
                let (i0, i1) = (i.saturating_sub(r), (i + r).min(nx - 1));
                let center = src[i + nx * (j + ny * k)];
                counts.clear();
                let mut uniform = true;
                for kk in k0..=k1 {
                    for jj in j0..=j1 {
                        let row = nx * (jj + ny * kk);
                        for &l in &src[row + i0..=row + i1] {
                            if l != center {
                                uniform = false;
                            }
                            match counts.iter_mut().find(|(cl, _)| *cl == l) {
                                Some((_, c)) => *c += 1,
                                None => counts.push((l, 1)),
                            }
                        }
                    }
                }
                if uniform {
                    continue;
                }
                let size = (i1 - i0 + 1) * (j1 - j0 + 1) * (k1 - k0 + 1);
                let &(mode, freq) = counts
                    .iter()
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .expect("neighborhood contains the center");
                if freq as f64 >= cfg.consensus * size as f64 {
                    slab[i + nx * j] = mode;
                }
            }
        }
    });
    Ok(out)
}
