use kiddo::immutable::float::kdtree::ImmutableKdTree;
use kiddo::SquaredEuclidean;
use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::kabsch::kabsch;
use super::Correspondence;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop once the RMS distance changes by less than this (m).
    pub epsilon: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self { max_iterations: 50, epsilon: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// Final RMS nearest-neighbor distance (m).
    pub fit_error: f64,
    pub iterations: usize,
}

fn centroid(points: &[Point3<f64>]) -> Vector3<f64> {
    points.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / points.len() as f64
}

/// Point-to-point ICP aligning `src` onto `dst`, initialized by centroid alignment.
pub fn icp(src: &[Point3<f64>], dst: &[Point3<f64>], cfg: &IcpConfig) -> Result<IcpResult> {
    if src.is_empty() || dst.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let coords: Vec<[f64; 3]> = dst.iter().map(|p| [p.x, p.y, p.z]).collect();
    let tree: ImmutableKdTree<f64, u32, 3, 32> = ImmutableKdTree::new_from_slice(&coords);

    let match_all = |t: &RigidTransform| -> (Vec<Correspondence>, f64) {
        let mut sq = 0.0;
        let pairs = src
            .iter()
            .map(|s| {
                let q = t.apply(s);
                let nn = tree.nearest_one::<SquaredEuclidean>(&[q.x, q.y, q.z]);
                sq += nn.distance;
                Correspondence { src: *s, dst: dst[nn.item as usize] }
            })
            .collect();
        (pairs, (sq / src.len() as f64).sqrt())
    };

    let mut transform = RigidTransform::from_translation(centroid(dst) - centroid(src));
    let (mut pairs, mut rms) = match_all(&transform);
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let Ok(next) = kabsch(&pairs) else { break };
        let (next_pairs, next_rms) = match_all(&next);
        let improved = next_rms <= rms;
        let change = (rms - next_rms).abs();
        if improved {
            transform = next;
            pairs = next_pairs;
            rms = next_rms;
        }
        if !improved || change < cfg.epsilon {
            break;
        }
    }
    Ok(IcpResult { transform, fit_error: rms, iterations })
}
