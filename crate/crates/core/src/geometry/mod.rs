//! Back-projection and weighted least-squares fitting of planes and lines.

mod camera;
mod line;
mod line2;
mod plane;
mod point;
mod segment;

pub use camera::CameraIntrinsics;
pub use line::{
    fit_line_wls, ransac_line, sample_line_pixels, Line3, LineFitParams, RansacParams,
    MAX_LINE_SAMPLES,
};
pub use line2::Line2;
pub(crate) use line2::slope_difference;
pub use plane::{fit_plane_wls, fit_plane_wls_detailed, PlaneFit, PlaneParams};
pub use point::{backproject, backproject_jacobian, Point3, PIXEL_VARIANCE};
pub use segment::{segment_planes, OrganizedCloud, PixelMask, PlaneSegment, SegmentParams};

use nalgebra::{Matrix3, SymmetricEigen};

/// Symmetric positive semi-definite within `-1e-9 * trace` on the eigenvalues.
pub fn is_psd3(m: &Matrix3<f64>) -> bool {
    let sym = (m - m.transpose()).abs().max() <= 1e-9 * m.abs().max().max(1e-300);
    let tol = 1e-9 * m.trace().abs();
    sym && SymmetricEigen::new(*m)
        .eigenvalues
        .iter()
        .all(|&l| l >= -tol)
}
