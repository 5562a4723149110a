//! Two-frame pose from point, line and plane matches with a known answer.

use nalgebra::{Matrix3, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgbd_vo::geometry::{CameraIntrinsics, Line2, PlaneParams, Point3};
use rgbd_vo::pose::{estimate_pose, LineMatch, PlaneMatch, PointMatch, Pose, PoseProblem, SolverParams};

fn main() -> rgbd_vo::Result<()> {
    let k = CameraIntrinsics::tum_default();
    let truth = Pose::new(
        UnitQuaternion::from_euler_angles(0.02, -0.04, 0.01),
        Vector3::new(30.0, -15.0, 40.0),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut problem = PoseProblem::new(k);

    for _ in 0..40 {
        let p = Vector3::new(rng.random_range(-800.0..800.0), rng.random_range(-600.0..600.0), rng.random_range(1200.0..3000.0));
        let jitter = Vector2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        problem.points.push(PointMatch {
            point: Point3::isotropic(p, 4.0),
            observed: k.project(&truth.transform_point(&p)) + jitter,
        });
    }
    for (a, b) in [
        (Vector3::new(-500.0, -300.0, 2000.0), Vector3::new(500.0, -300.0, 2100.0)),
        (Vector3::new(-400.0, 400.0, 1800.0), Vector3::new(-380.0, -350.0, 1900.0)),
    ] {
        let observed = Line2::through(&k.project(&truth.transform_point(&a)), &k.project(&truth.transform_point(&b)))
            .expect("distinct endpoints");
        problem.lines.push(LineMatch {
            endpoints: [Point3::isotropic(a, 4.0), Point3::isotropic(b, 4.0)],
            observed,
        });
    }
    let r = truth.rotation.to_rotation_matrix();
    for (n, d) in [(Vector3::new(0.0, 0.0, -1.0), 2500.0), (Vector3::new(0.0, -1.0, 0.0), 900.0)] {
        let theta_m = n / d;
        let previous = PlaneParams::from_minimal(theta_m, Matrix3::identity() * (1e-3 * theta_m.norm()).powi(2))?;
        problem.planes.push(PlaneMatch {
            previous,
            current: previous.transformed(&r, &truth.translation)?,
        });
    }

    let est = estimate_pose(&problem, &Pose::identity(), &SolverParams::default())?;
    let err = truth.inverse().compose(&est.pose);
    println!("converged       {} after {} iterations", est.converged, est.iterations);
    println!("matches used    {} points, {} lines, {} planes", est.points_used, est.lines_used, est.planes_used);
    println!("translation     {:.3?} mm", est.pose.translation.as_slice());
    println!("error           {:.4} mm, {:.5} deg", err.translation.norm(), err.rotation_angle().to_degrees());
    let std: Vec<String> = (0..6).map(|i| format!("{:.2e}", est.pose.cov[(i, i)].sqrt())).collect();
    println!("std [t | q]     {}", std.join(" "));
    Ok(())
}
