use nalgebra::{Matrix3, Matrix6, Quaternion, SymmetricEigen, UnitQuaternion, Vector3, Vector6};

use crate::{Error, Result};

/// Rigid transform `P' = R P + t` with a 6x6 covariance over `ξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub cov: Matrix6<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    v.cross_matrix()
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            cov: Matrix6::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: canonical(rotation),
            translation,
            cov: Matrix6::zeros(),
        }
    }

    pub fn with_cov(mut self, cov: Matrix6<f64>) -> Self {
        self.cov = cov;
        self
    }

    /// Builds a pose from `ξ`; fails when the quaternion vector part leaves
    /// the unit ball.
    pub fn from_xi(xi: &Vector6<f64>) -> Result<Self> {
        let v = Vector3::new(xi[3], xi[4], xi[5]);
        let s = 1.0 - v.norm_squared();
        if !(s >= 0.0) {
            return Err(Error::RotationRange(f64::NAN));
        }
        let q = Quaternion::new(s.sqrt(), v.x, v.y, v.z);
        Ok(Pose {
            rotation: UnitQuaternion::new_unchecked(q),
            translation: Vector3::new(xi[0], xi[1], xi[2]),
            cov: Matrix6::zeros(),
        })
    }

    pub fn xi(&self) -> Vector6<f64> {
        let q = canonical(self.rotation);
        let t = self.translation;
        Vector6::new(t.x, t.y, t.z, q.i, q.j, q.k)
    }

    /// Scalar part `q₄` of the canonical quaternion.
    pub fn q4(&self) -> f64 {
        canonical(self.rotation).w
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn rotation_angle(&self) -> f64 {
        self.rotation.angle()
    }

    /// `self ∘ other`: applies `other` first. Covariances are propagated
    /// to first order assuming independence.
    pub fn compose(&self, other: &Pose) -> Pose {
        let rotation = canonical(self.rotation * other.rotation);
        let translation = self.rotation * other.translation + self.translation;
        let cov = propagate_uncertainty(&other.cov, &self.cov, self, other);
        Pose {
            rotation,
            translation,
            cov,
        }
    }

    /// Inverse transform with its covariance.
    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        let translation = -(inv * self.translation);
        let v = canonical(self.rotation).imag();
        let mut j = Matrix6::zeros();
        let rt = inv.to_rotation_matrix().into_inner();
        j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-rt));
        j.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(-rotation_transpose_jacobian(&v, &self.translation)));
        j.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(-Matrix3::identity()));
        Pose {
            rotation: canonical(inv),
            translation,
            cov: j * self.cov * j.transpose(),
        }
    }

    /// Pose with translation scaled and rotation slerped towards identity by
    /// `factor`.
    pub fn scaled(&self, factor: f64) -> Pose {
        let rotation = UnitQuaternion::identity().slerp(&canonical(self.rotation), factor);
        Pose::new(rotation, self.translation * factor)
    }
}

/// `∂(R(v) p)/∂v` with `q₄ = √(1 − ‖v‖²)`.
pub fn rotation_jacobian(v: &Vector3<f64>, p: &Vector3<f64>) -> Matrix3<f64> {
    let w = (1.0 - v.norm_squared()).max(0.0).sqrt();
    let vxp = v.cross(p);
    let mut j = Matrix3::zeros();
    for i in 0..3 {
        let e = Vector3::ith(i, 1.0);
        let dw = -v[i] / w;
        let col = 2.0 * dw * vxp + 2.0 * w * e.cross(p) + 2.0 * (e.cross(&vxp) + v.cross(&e.cross(p)));
        j.set_column(i, &col);
    }
    j
}

/// `∂(R(v)ᵀ p)/∂v`.
pub fn rotation_transpose_jacobian(v: &Vector3<f64>, p: &Vector3<f64>) -> Matrix3<f64> {
    let w = (1.0 - v.norm_squared()).max(0.0).sqrt();
    let vxp = v.cross(p);
    let mut j = Matrix3::zeros();
    for i in 0..3 {
        let e = Vector3::ith(i, 1.0);
        let dw = -v[i] / w;
        let col =
            -2.0 * dw * vxp - 2.0 * w * e.cross(p) + 2.0 * (e.cross(&vxp) + v.cross(&e.cross(p)));
        j.set_column(i, &col);
    }
    j
}

/// Jacobians `(F, G)` of the composition `step ∘ prev` with respect to the
/// parameters of `prev` and `step`.
pub fn transition_jacobians(step: &Pose, prev: &Pose) -> (Matrix6<f64>, Matrix6<f64>) {
    let a = canonical(step.rotation);
    let b = canonical(prev.rotation);
    let (av, aw) = (a.imag(), a.w);
    let (bv, bw) = (b.imag(), b.w);
    let eye = Matrix3::identity();

    // vec(a ⊗ b) = aw·bv + bw·av + av × bv
    let dq_db = aw * eye + skew(&av) - av * bv.transpose() / bw;
    let dq_da = bw * eye - skew(&bv) - bv * av.transpose() / aw;
    let sign = if aw * bw - av.dot(&bv) < 0.0 { -1.0 } else { 1.0 };

    let mut f = Matrix6::zeros();
    f.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&a.to_rotation_matrix().into_inner());
    f.fixed_view_mut::<3, 3>(3, 3).copy_from(&(dq_db * sign));

    let mut g = Matrix6::zeros();
    g.fixed_view_mut::<3, 3>(0, 0).copy_from(&eye);
    g.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&rotation_jacobian(&av, &prev.translation));
    g.fixed_view_mut::<3, 3>(3, 3).copy_from(&(dq_da * sign));
    (f, g)
}

/// Covariance of `step ∘ prev` as `F Σ_prev Fᵀ + G Q Gᵀ`.
pub fn propagate_uncertainty(
    prev_cov: &Matrix6<f64>,
    step_cov: &Matrix6<f64>,
    step: &Pose,
    prev: &Pose,
) -> Matrix6<f64> {
    let (f, g) = transition_jacobians(step, prev);
    let out = f * prev_cov * f.transpose() + g * step_cov * g.transpose();
    (out + out.transpose()) * 0.5
}

/// Largest eigenvalue of the translation block of a pose covariance.
pub fn translation_eigen_max(cov: &Matrix6<f64>) -> f64 {
    let block: Matrix3<f64> = cov.fixed_view::<3, 3>(0, 0).into_owned();
    let block = (block + block.transpose()) * 0.5;
    SymmetricEigen::new(block).eigenvalues.max()
}

/// A pose is accepted when its translation uncertainty stays within `threshold` (mm²).
pub fn validate_pose(cov: &Matrix6<f64>, threshold: f64) -> bool {
    translation_eigen_max(cov) <= threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Unit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_pose(rng: &mut ChaCha8Rng, max_angle: f64, max_t: f64) -> Pose {
        let axis = Unit::new_normalize(Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ));
        let q = UnitQuaternion::from_axis_angle(&axis, rng.random_range(-max_angle..max_angle));
        let t = Vector3::new(
            rng.random_range(-max_t..max_t),
            rng.random_range(-max_t..max_t),
            rng.random_range(-max_t..max_t),
        );
        Pose::new(q, t)
    }

    fn random_spd(rng: &mut ChaCha8Rng) -> Matrix6<f64> {
        let mut a = Matrix6::zeros();
        for v in a.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        a * a.transpose() + Matrix6::identity() * 0.1
    }

    fn close(a: &Pose, b: &Pose, tol: f64) -> bool {
        (a.translation - b.translation).norm() < tol && a.rotation.angle_to(&b.rotation) < tol
    }

    #[test]
    fn identity_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_pose(&mut rng, 1.0, 100.0);
        assert!(close(&Pose::identity().compose(&p), &p, 1e-12));
        assert!(close(&p.compose(&p.inverse()), &Pose::identity(), 1e-12));
    }

    #[test]
    fn quarter_turns_make_half_turn() {
        let qz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        let a = Pose::new(qz, Vector3::zeros());
        let c = a.compose(&a);
        let expected = nalgebra::Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        assert!((c.rotation_matrix() - expected).norm() < 1e-12);
    }

    #[test]
    fn composition_is_associative_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let a = random_pose(&mut rng, 3.0, 500.0);
            let b = random_pose(&mut rng, 3.0, 500.0);
            let c = random_pose(&mut rng, 3.0, 500.0);
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            assert!((l.translation - r.translation).norm() < 1e-12 * 1500.0);
            assert!(l.rotation.angle_to(&r.rotation) < 1e-12);
        }
        let mut p = random_pose(&mut rng, 0.2, 10.0);
        let step = random_pose(&mut rng, 0.2, 10.0);
        for _ in 0..10_000 {
            p = step.compose(&p);
        }
        assert!((p.rotation.norm() - 1.0).abs() < 1e-12);
        assert!(p.q4() >= 0.0);
    }

    #[test]
    fn xi_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_pose(&mut rng, 1.0, 100.0);
        let q = Pose::from_xi(&p.xi()).unwrap();
        assert!(close(&p, &q, 1e-12));
        assert!(Pose::from_xi(&Vector6::new(0.0, 0.0, 0.0, 1.0, 1.0, 0.0)).is_err());
    }

    fn numeric_jacobian<F: Fn(&Vector3<f64>) -> Vector3<f64>>(f: F, v: &Vector3<f64>) -> Matrix3<f64> {
        let h = 1e-6;
        let mut j = Matrix3::zeros();
        for i in 0..3 {
            let mut d = Vector3::zeros();
            d[i] = h;
            j.set_column(i, &((f(&(v + d)) - f(&(v - d))) / (2.0 * h)));
        }
        j
    }

    fn rel_err<const R: usize, const C: usize>(
        a: &nalgebra::SMatrix<f64, R, C>,
        b: &nalgebra::SMatrix<f64, R, C>,
    ) -> f64 {
        (a - b).norm() / a.norm().max(b.norm()).max(1e-12)
    }

    #[test]
    fn rotation_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let pose = random_pose(&mut rng, 2.0, 1.0);
            let v = pose.xi().fixed_rows::<3>(3).into_owned();
            let p = Vector3::new(
                rng.random_range(-1000.0..1000.0),
                rng.random_range(-1000.0..1000.0),
                rng.random_range(500.0..3000.0),
            );
            let rot = |v: &Vector3<f64>| {
                let w = (1.0 - v.norm_squared()).sqrt();
                UnitQuaternion::new_unchecked(Quaternion::new(w, v.x, v.y, v.z))
            };
            let num = numeric_jacobian(|v| rot(v) * p, &v);
            assert!(rel_err(&num, &rotation_jacobian(&v, &p)) < 1e-5);
            let num_t = numeric_jacobian(|v| rot(v).inverse() * p, &v);
            assert!(rel_err(&num_t, &rotation_transpose_jacobian(&v, &p)) < 1e-5);
        }
    }

    #[test]
    fn transition_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-7;
        for _ in 0..100 {
            let step = random_pose(&mut rng, 1.0, 200.0);
            let prev = random_pose(&mut rng, 1.0, 200.0);
            let (f, g) = transition_jacobians(&step, &prev);
            let compose_xi = |s: &Vector6<f64>, p: &Vector6<f64>| {
                let s = Pose::from_xi(s).unwrap();
                let p = Pose::from_xi(p).unwrap();
                s.compose(&p).xi()
            };
            let (xs, xp) = (step.xi(), prev.xi());
            let mut nf = Matrix6::zeros();
            let mut ng = Matrix6::zeros();
            for i in 0..6 {
                let hh = if i < 3 { 1e-3 } else { h };
                let mut d = Vector6::zeros();
                d[i] = hh;
                nf.set_column(i, &((compose_xi(&xs, &(xp + d)) - compose_xi(&xs, &(xp - d))) / (2.0 * hh)));
                ng.set_column(i, &((compose_xi(&(xs + d), &xp) - compose_xi(&(xs - d), &xp)) / (2.0 * hh)));
            }
            assert!(rel_err(&nf, &f) < 1e-5, "F {}", rel_err(&nf, &f));
            assert!(rel_err(&ng, &g) < 1e-5, "G {}", rel_err(&ng, &g));
        }
    }

    #[test]
    fn propagation_from_zero_with_identity_step_returns_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = random_spd(&mut rng);
        let out = propagate_uncertainty(&Matrix6::zeros(), &q, &Pose::identity(), &Pose::identity());
        assert!((out - q).norm() < 1e-12);
    }

    #[test]
    fn repeated_propagation_trace_grows() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let step = random_pose(&mut rng, 0.05, 20.0).with_cov(random_spd(&mut rng) * 1e-3);
        let mut acc = Pose::identity();
        let mut last = 0.0;
        for _ in 0..100 {
            acc = step.compose(&acc);
            let tr = acc.cov.trace();
            assert!(tr >= last - 1e-12);
            last = tr;
        }
    }

    #[test]
    fn inverse_covariance_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_pose(&mut rng, 0.5, 100.0).with_cov(random_spd(&mut rng));
        let back = p.inverse().inverse();
        assert!((back.cov - p.cov).norm() / p.cov.norm() < 1e-9);
    }

    #[test]
    fn validation_threshold() {
        assert!(validate_pose(&Matrix6::zeros(), 25.0));
        let mut c = Matrix6::zeros();
        c[(0, 0)] = 50.0;
        assert!(!validate_pose(&c, 25.0));
    }

    #[test]
    fn scaled_rotation_keeps_axis() {
        let axis = Unit::new_normalize(Vector3::new(1.0, 2.0, -0.5));
        let p = Pose::new(UnitQuaternion::from_axis_angle(&axis, 10f64.to_radians()), Vector3::new(10.0, 0.0, 0.0));
        let s = p.scaled(0.9);
        assert!((s.rotation_angle() - 9f64.to_radians()).abs() < 1e-12);
        let (a, _) = s.rotation.axis_angle().unwrap();
        assert!((a.into_inner() - axis.into_inner()).norm() < 1e-12);
        assert!((s.translation - Vector3::new(9.0, 0.0, 0.0)).norm() < 1e-12);
    }
}
