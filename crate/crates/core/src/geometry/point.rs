use nalgebra::{Matrix3, Vector3};

use super::CameraIntrinsics;
use crate::{Error, Result};

/// Variance of a pixel coordinate under uniform quantization over one pixel.
pub const PIXEL_VARIANCE: f64 = 1.0 / 12.0;

/// A 3D point in the camera frame (mm) with its covariance (mm²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub p: Vector3<f64>,
    pub cov: Matrix3<f64>,
}

impl Point3 {
    pub fn new(p: Vector3<f64>, cov: Matrix3<f64>) -> Self {
        Point3 { p, cov }
    }

    /// Point with an isotropic covariance.
    pub fn isotropic(p: Vector3<f64>, variance: f64) -> Self {
        Point3 {
            p,
            cov: Matrix3::from_diagonal_element(variance),
        }
    }

    /// Depth variance used for the least-squares weights.
    pub fn depth_variance(&self) -> f64 {
        self.cov[(2, 2)]
    }
}

/// Jacobian of the back-projection with respect to `(u, v, z)`.
pub fn backproject_jacobian(u: f64, v: f64, z: f64, k: &CameraIntrinsics) -> Matrix3<f64> {
    let x = (u - k.cx) / k.fx;
    let y = (v - k.cy) / k.fy;
    Matrix3::new(
        z / k.fx, 0.0, x, //
        0.0, z / k.fy, y, //
        0.0, 0.0, 1.0,
    )
}

/// Back-projects pixel `(u, v)` at depth `z` and propagates pixel quantization
/// and depth variance to first order.
pub fn backproject(u: f64, v: f64, z: f64, var_z: f64, k: &CameraIntrinsics) -> Result<Point3> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::InvalidDepth(z));
    }
    let p = k.ray(u, v) * z;
    let j = backproject_jacobian(u, v, z, k);
    let input = Matrix3::from_diagonal(&Vector3::new(PIXEL_VARIANCE, PIXEL_VARIANCE, var_z));
    let cov = j * input * j.transpose();
    Ok(Point3 { p, cov })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::is_psd3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn principal_point_depth_variance_passes_through() {
        let k = camera();
        let pt = backproject(k.cx, k.cy, 1000.0, 2.03, &k).unwrap();
        assert_eq!(pt.p, Vector3::new(0.0, 0.0, 1000.0));
        assert!((pt.cov[(2, 2)] - 2.03).abs() < 1e-15);
        assert!(is_psd3(&pt.cov));
    }

    #[test]
    fn rejects_nonpositive_depth() {
        let k = camera();
        assert!(matches!(
            backproject(1.0, 1.0, 0.0, 1.0, &k),
            Err(Error::InvalidDepth(_))
        ));
        assert!(backproject(1.0, 1.0, -5.0, 1.0, &k).is_err());
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let k = camera();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let u = rng.random_range(0.0..640.0);
            let v = rng.random_range(0.0..480.0);
            let z = rng.random_range(300.0..5000.0);
            let j = backproject_jacobian(u, v, z, &k);
            let h = 1e-3;
            let f = |x: Vector3<f64>| k.ray(x[0], x[1]) * x[2];
            let x0 = Vector3::new(u, v, z);
            for c in 0..3 {
                let mut d = Vector3::zeros();
                d[c] = h;
                let num = (f(x0 + d) - f(x0 - d)) / (2.0 * h);
                for r in 0..3 {
                    let scale = j[(r, c)].abs().max(1e-12);
                    assert!((num[r] - j[(r, c)]).abs() / scale < 1e-6 || j[(r, c)] == 0.0);
                }
            }
        }
    }

    #[test]
    fn monte_carlo_covariance_matches() {
        let k = camera();
        let (u, v, z) = (420.0, 150.0, 1500.0);
        let var_z = 9.0;
        let pt = backproject(u, v, z, var_z, &k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let npix = Normal::new(0.0, PIXEL_VARIANCE.sqrt()).unwrap();
        let nz = Normal::new(0.0, var_z.sqrt()).unwrap();
        let n = 100_000;
        let samples: Vec<Vector3<f64>> = (0..n)
            .map(|_| {
                let du = npix.sample(&mut rng);
                let dv = npix.sample(&mut rng);
                let dz = nz.sample(&mut rng);
                k.ray(u + du, v + dv) * (z + dz)
            })
            .collect();
        let mean = samples.iter().sum::<Vector3<f64>>() / n as f64;
        let mut emp = Matrix3::zeros();
        for s in &samples {
            let d = s - mean;
            emp += d * d.transpose();
        }
        emp /= (n - 1) as f64;
        for i in 0..3 {
            assert!(
                (emp[(i, i)] - pt.cov[(i, i)]).abs() / pt.cov[(i, i)] < 0.05,
                "diag {i}: {} vs {}",
                emp[(i, i)],
                pt.cov[(i, i)]
            );
        }
        // Off-diagonal entries coupled through the shared depth.
        for (r, c) in [(0, 2), (1, 2)] {
            assert!((emp[(r, c)] - pt.cov[(r, c)]).abs() / pt.cov[(r, c)].abs() < 0.05);
        }
    }
}
