//! Dense labeled voxel grids and the operators acting on them.

mod filter;
mod io;
mod raycast;
mod refine;
mod transform;

pub use filter::{mode_filter, ModeFilterConfig};
pub use io::{read_voxel_state, write_voxel_state, VOXEL_MAGIC, VOXEL_VERSION};
pub use raycast::{first_hit, project};
pub use refine::{free_space_refine, in_observed_free_space, RefineResult, Q_R_FLOOR};
pub use transform::{apply_trajectory, apply_transform, Trajectory};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelCoord {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl VoxelCoord {
    pub fn new(i: usize, j: usize, k: usize) -> Self {
        Self { i, j, k }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    /// Edge length of a voxel in meters.
    pub resolution: f64,
    /// World position of the grid's minimum corner.
    pub origin: [f64; 3],
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { dims: [100, 100, 50], resolution: 0.01, origin: [0.0, 0.0, 0.0] }
    }
}

impl GridSpec {
    pub fn new(dims: [usize; 3], resolution: f64, origin: [f64; 3]) -> Result<Self> {
        let spec = Self { dims, resolution, origin };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::InvalidGrid(format!("resolution {} must be > 0", self.resolution)));
        }
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidGrid(format!("dims {:?} must all be ≥ 1", self.dims)));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid("non-finite origin".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index, x fastest.
    pub fn index(&self, c: VoxelCoord) -> usize {
        c.i + self.dims[0] * (c.j + self.dims[1] * c.k)
    }

    pub fn coord(&self, idx: usize) -> VoxelCoord {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        VoxelCoord { i, j: rest % self.dims[1], k: rest / self.dims[1] }
    }

    pub fn contains(&self, c: VoxelCoord) -> bool {
        c.i < self.dims[0] && c.j < self.dims[1] && c.k < self.dims[2]
    }

    pub fn center(&self, c: VoxelCoord) -> Point3<f64> {
        let r = self.resolution;
        Point3::new(
            self.origin[0] + (c.i as f64 + 0.5) * r,
            self.origin[1] + (c.j as f64 + 0.5) * r,
            self.origin[2] + (c.k as f64 + 0.5) * r,
        )
    }

    pub fn center_of_index(&self, idx: usize) -> Point3<f64> {
        self.center(self.coord(idx))
    }

    /// Cell containing a world point, if inside the grid.
    pub fn cell_of(&self, p: &Point3<f64>) -> Option<VoxelCoord> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.resolution).floor();
            if f < 0.0 || f >= self.dims[a] as f64 {
                return None;
            }
            out[a] = f as usize;
        }
        Some(VoxelCoord::new(out[0], out[1], out[2]))
    }

    pub fn max_corner(&self) -> Point3<f64> {
        Point3::new(
            self.origin[0] + self.dims[0] as f64 * self.resolution,
            self.origin[1] + self.dims[1] as f64 * self.resolution,
            self.origin[2] + self.dims[2] as f64 * self.resolution,
        )
    }
}

/// Sparse set of voxels drawn from one grid, kept as sorted linear indices.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSet {
    pub spec: GridSpec,
    indices: Vec<u32>,
}

impl VoxelSet {
    pub fn new(spec: GridSpec, coords: impl IntoIterator<Item = VoxelCoord>) -> Result<Self> {
        let mut indices = Vec::new();
        for c in coords {
            if !spec.contains(c) {
                return Err(Error::InvalidArgument(format!("voxel {c:?} outside grid {:?}", spec.dims)));
            }
            indices.push(spec.index(c) as u32);
        }
        indices.sort_unstable();
        indices.dedup();
        Ok(Self { spec, indices })
    }

    pub(crate) fn from_sorted_indices(spec: GridSpec, indices: Vec<u32>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self { spec, indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn contains(&self, c: VoxelCoord) -> bool {
        self.spec.contains(c) && self.indices.binary_search(&(self.spec.index(c) as u32)).is_ok()
    }

    pub fn intersection_len(&self, other: &VoxelSet) -> usize {
        let (mut a, mut b, mut n) = (0, 0, 0);
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    a += 1;
                    b += 1;
                }
            }
        }
        n
    }
}

/// Jaccard index `|a∩b| / |a∪b|`; two empty sets count as identical.
pub fn iou(a: &VoxelSet, b: &VoxelSet) -> Result<f64> {
    if a.spec != b.spec {
        return Err(Error::GridMismatch);
    }
    let inter = a.intersection_len(b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Assignment of an object label to every voxel; label 0 is free space.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelState {
    spec: GridSpec,
    labels: Vec<Label>,
}

impl VoxelState {
    pub fn empty(spec: GridSpec) -> Self {
        let n = spec.len();
        Self { spec, labels: vec![0; n] }
    }

    pub fn from_labels(spec: GridSpec, labels: Vec<Label>) -> Result<Self> {
        spec.validate()?;
        if labels.len() != spec.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for grid of {} voxels",
                labels.len(),
                spec.len()
            )));
        }
        Ok(Self { spec, labels })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [Label] {
        &mut self.labels
    }

    pub fn into_labels(self) -> Vec<Label> {
        self.labels
    }

    pub fn get(&self, c: VoxelCoord) -> Label {
        self.labels[self.spec.index(c)]
    }

    pub fn set(&mut self, c: VoxelCoord, label: Label) {
        let idx = self.spec.index(c);
        self.labels[idx] = label;
    }

    /// Object count K, taken as the largest label present.
    pub fn num_objects(&self) -> Label {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    pub fn occupied_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Voxel count per label, indexed by label (entry 0 is free space).
    pub fn label_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.num_objects() as usize + 1];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Sorted distinct nonzero labels.
    pub fn object_labels(&self) -> Vec<Label> {
        self.label_sizes()
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &n)| n > 0)
            .map(|(l, _)| l as Label)
            .collect()
    }

    /// The voxel set `O^k` of one label.
    pub fn object(&self, label: Label) -> VoxelSet {
        let indices = self
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i as u32)
            .collect();
        VoxelSet::from_sorted_indices(self.spec.clone(), indices)
    }

    /// Renumber objects to `1..=K` in order of first occurrence (x-fastest scan).
    pub fn relabel_contiguous(&mut self) {
        let mut map: Vec<Label> = vec![0; self.num_objects() as usize + 1];
        let mut next: Label = 0;
        for l in self.labels.iter_mut() {
            if *l == 0 {
                continue;
            }
            let slot = &mut map[*l as usize];
            if *slot == 0 {
                next += 1;
                *slot = next;
            }
            *l = *slot;
        }
    }
}
