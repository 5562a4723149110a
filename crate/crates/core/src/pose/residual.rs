use nalgebra::{Matrix3, Matrix3x4, SMatrix, SVector, Vector2, Vector3};

use super::se3::{rotation_jacobian, rotation_transpose_jacobian, Pose};
use crate::geometry::{CameraIntrinsics, Line2, PlaneParams, Point3, PIXEL_VARIANCE};
use crate::{Error, Result};

/// A residual with its Jacobian over `ξ` and the diagonal of its covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual<const N: usize> {
    pub value: SVector<f64, N>,
    pub jacobian: SMatrix<f64, N, 6>,
    pub variance: SVector<f64, N>,
}

/// 3D point from the previous frame observed at a pixel of the current one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMatch {
    pub point: Point3,
    pub observed: Vector2<f64>,
}

/// 3D line endpoints from the previous frame against an image line of the
/// current one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineMatch {
    pub endpoints: [Point3; 2],
    pub observed: Line2,
}

/// Plane of the previous frame matched to a plane of the current one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneMatch {
    pub previous: PlaneParams,
    pub current: PlaneParams,
}

fn transform_jacobian(pose: &Pose, p: &Vector3<f64>) -> SMatrix<f64, 3, 6> {
    let v = pose.xi().fixed_rows::<3>(3).into_owned();
    let mut j = SMatrix::<f64, 3, 6>::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&rotation_jacobian(&v, p));
    j
}

/// Reprojection residual `p' − π(R P + t)` in pixels.
pub fn point_residual(m: &PointMatch, pose: &Pose, k: &CameraIntrinsics) -> Result<Residual<2>> {
    let rot = pose.rotation_matrix();
    let pc = rot * m.point.p + pose.translation;
    if !(pc.z > 0.0) {
        return Err(Error::Cheirality(pc.z));
    }
    let jp = k.project_jacobian(&pc);
    let value = m.observed - k.project(&pc);
    let jacobian = -(jp * transform_jacobian(pose, &m.point.p));
    let g = jp * rot;
    let cov = g * m.point.cov * g.transpose();
    let variance = Vector2::new(cov[(0, 0)], cov[(1, 1)]).add_scalar(PIXEL_VARIANCE);
    Ok(Residual {
        value,
        jacobian,
        variance,
    })
}

/// Signed distances of both projected endpoints to the observed image line.
pub fn line_residual(m: &LineMatch, pose: &Pose, k: &CameraIntrinsics) -> Result<Residual<2>> {
    let rot = pose.rotation_matrix();
    let n = Vector2::new(m.observed.coeffs.x, m.observed.coeffs.y);
    let mut value = Vector2::zeros();
    let mut jacobian = SMatrix::<f64, 2, 6>::zeros();
    let mut variance = Vector2::zeros();
    for (i, end) in m.endpoints.iter().enumerate() {
        let pc = rot * end.p + pose.translation;
        if !(pc.z > 0.0) {
            return Err(Error::Cheirality(pc.z));
        }
        let jp = k.project_jacobian(&pc);
        value[i] = m.observed.signed_distance(&k.project(&pc));
        let row = n.transpose() * jp * transform_jacobian(pose, &end.p);
        jacobian.set_row(i, &row);
        let g = n.transpose() * jp * rot;
        variance[i] = (g * end.cov * g.transpose())[0] + PIXEL_VARIANCE;
    }
    Ok(Residual {
        value,
        jacobian,
        variance,
    })
}

/// Plane-to-plane residual in mm.
///
/// The current plane `{N', d'}` is carried into the previous frame as
/// `{Rᵀ N', N'·t + d'}` and compared with the previous plane `{N, d}` through
/// their closest-point embeddings: `(N'·t + d') Rᵀ N' − d N`.
pub fn plane_residual(m: &PlaneMatch, pose: &Pose) -> Result<Residual<3>> {
    let rot = pose.rotation_matrix();
    let t = pose.translation;
    let v = pose.xi().fixed_rows::<3>(3).into_owned();
    let (nc, dc) = (m.current.normal, m.current.d);
    let (np, dp) = (m.previous.normal, m.previous.d);
    let rn = rot.transpose() * nc;
    let s = nc.dot(&t) + dc;
    let value = rn * s - np * dp;

    let mut jacobian = SMatrix::<f64, 3, 6>::zeros();
    jacobian
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(rn * nc.transpose()));
    jacobian
        .fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(rotation_transpose_jacobian(&v, &nc) * s));

    let mut j_cur = Matrix3x4::zeros();
    j_cur
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(rn * t.transpose() + rot.transpose() * s));
    j_cur.set_column(3, &rn);
    let mut j_prev = Matrix3x4::zeros();
    j_prev
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(-Matrix3::identity() * dp));
    j_prev.set_column(3, &(-np));
    let cov = j_cur * m.current.cov_theta * j_cur.transpose()
        + j_prev * m.previous.cov_theta * j_prev.transpose();
    Ok(Residual {
        value,
        jacobian,
        variance: cov.diagonal(),
    })
}
