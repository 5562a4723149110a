use nalgebra::{Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3};

use super::Trajectory;
use crate::{Error, Result};

/// Tolerance when pairing a pose with the one `interval` seconds later.
pub const RPE_PAIRING_TOLERANCE: f64 = 0.05;

/// Translational (mm) and rotational (degrees) RMSE of relative motions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeError {
    pub trans_mm: f64,
    pub rot_deg: f64,
    pub pairs: usize,
}

/// Relative pose error over a fixed time interval.
///
/// Each estimate pose is paired with the estimate pose nearest to
/// `t + interval` (within [`RPE_PAIRING_TOLERANCE`]); ground truth is
/// interpolated at both timestamps.
pub fn compute_rpe(estimate: &Trajectory, truth: &Trajectory, interval: f64) -> Result<RelativeError> {
    let est = estimate.entries();
    let mut sum_t = 0.0;
    let mut sum_r = 0.0;
    let mut pairs = 0;
    for (i, (ti, pi)) in est.iter().enumerate() {
        let target = ti + interval;
        let Some((tj, pj)) = est[i + 1..]
            .iter()
            .filter(|(t, _)| (t - target).abs() <= RPE_PAIRING_TOLERANCE)
            .min_by(|a, b| (a.0 - target).abs().total_cmp(&(b.0 - target).abs()))
        else {
            continue;
        };
        let (Some(gi), Some(gj)) = (truth.interpolate(*ti), truth.interpolate(*tj)) else {
            continue;
        };
        let (dg, de) = (gi.inverse() * gj, pi.inverse() * pj);
        let err = dg.inverse() * de;
        sum_t += err.translation.vector.norm_squared();
        let angle = rotation_gap(&dg.rotation, &de.rotation);
        sum_r += angle * angle;
        pairs += 1;
    }
    if pairs == 0 {
        return Err(Error::InsufficientData(
            "no pose pairs overlap the ground truth at the requested interval".into(),
        ));
    }
    Ok(RelativeError {
        trans_mm: (sum_t / pairs as f64).sqrt(),
        rot_deg: (sum_r / pairs as f64).sqrt().to_degrees(),
        pairs,
    })
}

/// Angle of `a⁻¹ b`, zero when `a == b`.
fn rotation_gap(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let (a, mut b) = (a.coords, b.coords);
    if a.dot(&b) < 0.0 {
        b = -b;
    }
    4.0 * (a - b).norm().atan2((a + b).norm())
}

/// Rigid transform `g` minimising `Σ ‖g·aᵢ − bᵢ‖²`.
pub fn align_rigid(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<Isometry3<f64>> {
    let n = a.len() as f64;
    let ca = a.iter().sum::<Vector3<f64>>() / n;
    let cb = b.iter().sum::<Vector3<f64>>() / n;
    let spread = a.iter().map(|p| (p - ca).norm_squared()).sum::<f64>();
    if !(spread > 1e-12 * (1.0 + ca.norm_squared())) {
        return Err(Error::Degenerate("trajectory positions are all identical".into()));
    }
    let mut h = Matrix3::zeros();
    for (p, q) in a.iter().zip(b) {
        h += (q - cb) * (p - ca).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = UnitQuaternion::from_matrix(&(u * d * v_t));
    let t = cb - r * ca;
    Ok(Isometry3::from_parts(Translation3::from(t), r))
}

/// Absolute trajectory error in mm after rigid alignment of the estimate.
pub fn compute_ate(estimate: &Trajectory, truth: &Trajectory) -> Result<f64> {
    let (est, gt): (Vec<_>, Vec<_>) = estimate
        .entries()
        .iter()
        .filter_map(|(t, p)| truth.interpolate(*t).map(|g| (p.translation.vector, g.translation.vector)))
        .unzip();
    if est.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "absolute trajectory error needs 3 overlapping poses, got {}",
            est.len()
        )));
    }
    let g = align_rigid(&est, &gt)?;
    let cost = |g: &Isometry3<f64>| -> f64 {
        est.iter()
            .zip(&gt)
            .map(|(e, t)| (g * nalgebra::Point3::from(*e) - nalgebra::Point3::from(*t)).norm_squared())
            .sum()
    };
    let sum = cost(&g).min(cost(&Isometry3::identity()));
    Ok((sum / est.len() as f64).sqrt())
}
