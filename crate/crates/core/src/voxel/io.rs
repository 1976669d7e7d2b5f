//! Binary voxel-state files.
//!
//! Layout (all little-endian):
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 0..8  | magic `MSTVOXEL`                          |
//! | 8..12 | format version (u32)                      |
//! | 12..16| reserved, zero                            |
//! | 16..40| dims x, y, z (u64 each)                   |
//! | 40..48| resolution (f64)                          |
//! | 48..72| origin x, y, z (f64 each)                 |
//! | 72..  | runs of (count: u32, label: u16), x-fastest |

use std::io::{Read, Write};

use super::{GridSpec, VoxelState};
use crate::error::{Error, Result};

pub const VOXEL_MAGIC: &[u8; 8] = b"MSTVOXEL";
pub const VOXEL_VERSION: u32 = 1;

pub fn write_voxel_state<W: Write>(x: &VoxelState, mut w: W) -> Result<()> {
    let spec = x.spec();
    w.write_all(VOXEL_MAGIC)?;
    w.write_all(&VOXEL_VERSION.to_le_bytes())?;
    w.write_all(&[0u8; 4])?;
    for d in spec.dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&spec.resolution.to_le_bytes())?;
    for o in spec.origin {
        w.write_all(&o.to_le_bytes())?;
    }
    let labels = x.labels();
    let mut i = 0;
    while i < labels.len() {
        let l = labels[i];
        let mut n = 1usize;
        while i + n < labels.len() && labels[i + n] == l && n < u32::MAX as usize {
            n += 1;
        }
        w.write_all(&(n as u32).to_le_bytes())?;
        w.write_all(&l.to_le_bytes())?;
        i += n;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_voxel_state<R: Read>(mut r: R) -> Result<VoxelState> {
    let magic: [u8; 8] = read_array(&mut r)?;
    if &magic != VOXEL_MAGIC {
        return Err(Error::Format("bad voxel file magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VOXEL_VERSION {
        return Err(Error::Format(format!("unsupported voxel file version {version}")));
    }
    let _reserved: [u8; 4] = read_array(&mut r)?;
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = usize::try_from(u64::from_le_bytes(read_array(&mut r)?))
            .map_err(|_| Error::Format("grid dimension overflows".into()))?;
    }
    let resolution = f64::from_le_bytes(read_array(&mut r)?);
    let mut origin = [0.0; 3];
    for o in origin.iter_mut() {
        *o = f64::from_le_bytes(read_array(&mut r)?);
    }
    let spec = GridSpec::new(dims, resolution, origin)?;
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("grid size overflows".into()))?;
    let mut labels = Vec::with_capacity(total);
    while labels.len() < total {
        let n = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let l = u16::from_le_bytes(read_array(&mut r)?);
        if n == 0 || labels.len() + n > total {
            return Err(Error::Format("run-length data does not cover the grid exactly".into()));
        }
        labels.resize(labels.len() + n, l);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after voxel data".into()));
    }
    VoxelState::from_labels(spec, labels)
}
