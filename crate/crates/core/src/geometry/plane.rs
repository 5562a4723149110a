use nalgebra::{Matrix3, Matrix4, Matrix4x3, SymmetricEigen, Vector3, Vector4};

use super::Point3;
use crate::{Error, Result};

/// Infinite plane in Hessian normal form `N·P + d = 0` together with the
/// minimal parameterization `θm = N / d` and both covariances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneParams {
    pub normal: Vector3<f64>,
    pub d: f64,
    pub theta_m: Vector3<f64>,
    pub cov_theta_m: Matrix3<f64>,
    /// Covariance of `[N, d]`.
    pub cov_theta: Matrix4<f64>,
}

/// Plane fit plus the covariance the initial depth-only weights would imply.
#[derive(Debug, Clone, Copy)]
pub struct PlaneFit {
    pub params: PlaneParams,
    pub cov_theta_m_unrectified: Matrix3<f64>,
}

impl PlaneParams {
    /// Builds a plane from minimal parameters and their covariance.
    pub fn from_minimal(theta_m: Vector3<f64>, cov_theta_m: Matrix3<f64>) -> Result<Self> {
        let n = theta_m.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::NumericDegeneracy(
                "plane passes through the camera centre".into(),
            ));
        }
        let j = hessian_jacobian(&theta_m);
        let cov_theta = j * cov_theta_m * j.transpose();
        Ok(PlaneParams {
            normal: theta_m / n,
            d: 1.0 / n,
            theta_m,
            cov_theta_m,
            cov_theta: symmetrize4(&cov_theta),
        })
    }

    /// Plane from a Hessian form without uncertainty, mainly for tests and
    /// synthetic scenes. `d` must be non-zero.
    pub fn from_hessian(normal: Vector3<f64>, d: f64) -> Result<Self> {
        let n = normal.normalize();
        Self::from_minimal(n / d, Matrix3::zeros())
    }

    /// Signed point-to-plane distance.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.d
    }

    /// `d·N`, the point of the plane closest to the origin up to sign.
    pub fn embedding(&self) -> Vector3<f64> {
        self.normal * self.d
    }
}

/// Jacobian of `θ = [θm, 1] / ‖θm‖` with respect to `θm`.
pub(crate) fn hessian_jacobian(theta_m: &Vector3<f64>) -> Matrix4x3<f64> {
    let n = theta_m.norm();
    let n3 = n * n * n;
    let top = Matrix3::identity() / n - theta_m * theta_m.transpose() / n3;
    let bottom = -theta_m.transpose() / n3;
    let mut j = Matrix4x3::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&top);
    j.fixed_view_mut::<1, 3>(3, 0).copy_from(&bottom);
    j
}

fn symmetrize4(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

fn invert_normal_matrix(a: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let eig = SymmetricEigen::new(*a);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= max * 1e-12 {
        return Err(Error::Degenerate(
            "plane normal equations are singular (collinear or too few points)".into(),
        ));
    }
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("plane normal equations are singular".into()))?;
    Ok((inv + inv.transpose()) * 0.5)
}

/// Weighted least-squares plane fit.
///
/// Solves `A θm = b` with `A = Σ wᵢPᵢPᵢᵀ`, `b = −Σ wᵢPᵢ` and `wᵢ = 1/σ_Zᵢ²`, then
/// rebuilds `A` with the residual variances `θm Σ_Pᵢ θmᵀ` so that its inverse
/// is the covariance of `θm`.
pub fn fit_plane_wls(points: &[Point3]) -> Result<PlaneParams> {
    fit_plane_wls_detailed(points).map(|f| f.params)
}

pub fn fit_plane_wls_detailed(points: &[Point3]) -> Result<PlaneFit> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "plane fit needs 3 points, got {}",
            points.len()
        )));
    }
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for pt in points {
        let var = pt.depth_variance();
        if !(var > 0.0) {
            return Err(Error::InputDomain("point depth variance must be positive".into()));
        }
        let w = 1.0 / var;
        a += w * pt.p * pt.p.transpose();
        b -= w * pt.p;
    }
    let a_inv = invert_normal_matrix(&a)?;
    let theta_m = a_inv * b;
    if !theta_m.iter().all(|v| v.is_finite()) || theta_m.norm() < 1e-12 {
        return Err(Error::NumericDegeneracy(
            "plane passes through the camera centre".into(),
        ));
    }

    let mut a_rect = Matrix3::zeros();
    for pt in points {
        let var_r = (theta_m.transpose() * pt.cov * theta_m)[0];
        if !(var_r > 0.0) {
            return Err(Error::NumericDegeneracy(
                "zero plane residual variance".into(),
            ));
        }
        a_rect += pt.p * pt.p.transpose() / var_r;
    }
    let cov_theta_m = invert_normal_matrix(&a_rect)?;
    let params = PlaneParams::from_minimal(theta_m, cov_theta_m)?;
    Ok(PlaneFit {
        params,
        cov_theta_m_unrectified: a_inv,
    })
}

impl PlaneParams {
    /// Applies a rigid transform `P' = R P + t` to the plane, dropping covariance.
    pub fn transformed(&self, r: &nalgebra::Rotation3<f64>, t: &Vector3<f64>) -> Result<Self> {
        let n = r * self.normal;
        let d = self.d - n.dot(t);
        Self::from_hessian(n, d)
    }

    pub fn as_vector4(&self) -> Vector4<f64> {
        Vector4::new(self.normal.x, self.normal.y, self.normal.z, self.d)
    }
}
