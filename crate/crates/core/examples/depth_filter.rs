//! Denoise a static wall at 1.5 m with the three depth models.
//!
//! ```text
//! cargo run --release --example depth_filter
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rgbd_vo::depth_filter::{
    gm_convolve, temporal_fuse, variance_map, CosineMap, FusionParams, RangePointWindow, SensorNoiseModel,
    WindowFrame,
};
use rgbd_vo::eval::depth_rmse;
use rgbd_vo::pose::Pose;
use rgbd_vo::synthetic::{render_depth, static_plane};

fn main() -> rgbd_vo::Result<()> {
    let scene = static_plane(1500.0, 10, 7);
    let k = scene.camera;
    let cosines = CosineMap::new(&k);
    let model = SensorNoiseModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let mut window = RangePointWindow::new(10);

    println!("frame  raw_mm  cgm_mm  ogm_mm  ogm_std_mm");
    for (i, tp) in scene.trajectory.iter().enumerate() {
        let (raw, truth) = render_depth(&scene, &tp.isometry(), &scene.noise, &mut rng)?;
        let (cgm, cgm_var) = gm_convolve(&raw, &variance_map(&raw, &model))?;
        if i > 0 {
            window.advance(&Pose::identity());
        }
        let (ogm, ogm_var) = temporal_fuse(&window, &cgm, &cgm_var, &k, &cosines, &FusionParams::default())?;
        window.append(WindowFrame::from_maps(i as u64, &cgm, &cgm_var, &k, &cosines));

        let (cu, cv) = (k.width / 2, k.height / 2);
        println!(
            "{i:>5}  {:>6.2}  {:>6.2}  {:>6.2}  {:>10.2}",
            depth_rmse(&raw, &truth).unwrap_or(f64::NAN),
            depth_rmse(&cgm, &truth).unwrap_or(f64::NAN),
            depth_rmse(&ogm, &truth).unwrap_or(f64::NAN),
            ogm_var.get(cu, cv).sqrt(),
        );
    }
    Ok(())
}
