use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};

use super::Correspondence;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

/// Least-squares proper rigid transform mapping each `src` onto its `dst`.
pub fn kabsch(pairs: &[Correspondence]) -> Result<RigidTransform> {
    if pairs.len() < 3 {
        return Err(Error::Degenerate(format!("{} pairs, need at least 3", pairs.len())));
    }
    let n = pairs.len() as f64;
    let cs = pairs.iter().fold(Vector3::zeros(), |a, p| a + p.src.coords) / n;
    let cd = pairs.iter().fold(Vector3::zeros(), |a, p| a + p.dst.coords) / n;

    let mut scatter = Matrix3::zeros();
    let mut cov = Matrix3::zeros();
    for p in pairs {
        let s = p.src.coords - cs;
        let d = p.dst.coords - cd;
        scatter += s * s.transpose();
        cov += s * d.transpose();
    }
    let mut eig = SymmetricEigen::new(scatter).eigenvalues.as_slice().to_vec();
    eig.sort_by(|a, b| b.total_cmp(a));
    if eig[0] <= 0.0 || eig[1] <= 1e-12 * eig[0].max(1e-300) || eig[1] < 1e-24 {
        return Err(Error::Degenerate("source points are collinear".into()));
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vᵀ"));
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let r = v * fix * u.transpose();
    let t = cd - r * cs;
    Ok(RigidTransform::from_rotation_unchecked(r, t))
}

/// RMS of `|T(src) − dst|` over the pairs.
pub fn rms_residual(t: &RigidTransform, pairs: &[Correspondence]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let s: f64 = pairs.iter().map(|p| (t.apply(&p.src) - p.dst).norm_squared()).sum();
    (s / pairs.len() as f64).sqrt()
}

pub fn residual(t: &RigidTransform, p: &Correspondence) -> f64 {
    (t.apply(&p.src) - p.dst).norm()
}

/// Zip two equally indexed point lists into correspondences.
pub fn pairs_from(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Vec<Correspondence> {
    src.iter().zip(dst).map(|(&s, &d)| Correspondence { src: s, dst: d }).collect()
}
