//! RPE and ATE of a drifting estimate against a ground-truth loop, plus a
//! TUM round trip.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rgbd_vo::eval::{compute_ate, compute_rpe, Trajectory};

fn main() -> rgbd_vo::Result<()> {
    let rate = 30.0;
    let pose = |i: usize, drift: f64| {
        let t = i as f64 / rate;
        let a = t * 0.8;
        Isometry3::from_parts(
            Translation3::new(600.0 * a.cos() + drift * t, 50.0 * t, 600.0 * a.sin()),
            UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -a + 0.002 * drift * t),
        )
    };
    let truth = Trajectory::new((0..240).map(|i| (i as f64 / rate, pose(i, 0.0))).collect())?;
    let estimate = Trajectory::new((0..240).map(|i| (i as f64 / rate, pose(i, 12.0))).collect())?;

    let rpe = compute_rpe(&estimate, &truth, 1.0)?;
    println!("RPE/s  {:.3} mm  {:.4} deg  ({} pairs)", rpe.trans_mm, rpe.rot_deg, rpe.pairs);
    println!("ATE    {:.3} mm", compute_ate(&estimate, &truth)?);

    let moved = estimate.transformed(&Isometry3::translation(1000.0, 0.0, -250.0));
    println!("ATE after moving the estimate {:.3} mm", compute_ate(&moved, &truth)?);

    let path = std::env::temp_dir().join("rgbd-vo-estimate.txt");
    estimate.write_tum(&path)?;
    let back = Trajectory::read_tum(&path)?;
    println!("wrote {} poses to {}, read back {}", estimate.len(), path.display(), back.len());
    Ok(())
}
