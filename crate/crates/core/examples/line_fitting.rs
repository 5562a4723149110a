//! Recover an oblique 3D segment from noisy samples with gross outliers:
//! RANSAC for the consensus set, then the weighted closed-form fit.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rgbd_vo::geometry::{fit_line_wls, ransac_line, Point3, RansacParams};

fn main() -> rgbd_vo::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = Vector3::new(-300.0, 150.0, 1400.0);
    let b = Vector3::new(250.0, -120.0, 1900.0);
    let sigma = 3.0;

    let mut points = Vec::new();
    for i in 0..60 {
        let s = i as f64 / 59.0;
        let jitter = Vector3::from_fn(|_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        points.push(Point3::isotropic(a + (b - a) * s + jitter, sigma * sigma));
    }
    for _ in 0..15 {
        let p = Vector3::new(rng.random_range(-400.0..400.0), rng.random_range(-300.0..300.0), rng.random_range(1200.0..2100.0));
        points.push(Point3::isotropic(p, sigma * sigma));
    }

    let inliers = ransac_line(&points, &RansacParams { threshold: 12.0, ..RansacParams::default() })?;
    let chosen: Vec<Point3> = inliers.iter().map(|&i| points[i]).collect();
    let line = fit_line_wls(&chosen)?;

    let truth = (b - a).normalize();
    let dir = line.unit_direction();
    println!("consensus     {} of {} samples", inliers.len(), points.len());
    println!("direction     {:.5?}", dir.as_slice());
    println!("angle error   {:.4} deg", dir.dot(&truth).abs().min(1.0).acos().to_degrees());
    println!("fixed axis    {}", line.fixed_dim);
    for (e, t) in line.endpoints.iter().zip([a, b]) {
        println!("endpoint      {:.1?}  std {:.2} mm  (truth {:.1?})", e.p.as_slice(), e.cov.trace().sqrt(), t.as_slice());
    }
    Ok(())
}
