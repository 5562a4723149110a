/// Converts depth and its variance to range along the viewing ray.
pub fn depth_to_range(z: f64, var_z: f64, cos_alpha: f64) -> (f64, f64) {
    debug_assert!(cos_alpha > 0.0 && cos_alpha <= 1.0);
    (z / cos_alpha, var_z / (cos_alpha * cos_alpha))
}

/// Inverse of [`depth_to_range`].
pub fn range_to_depth(r: f64, var_r: f64, cos_alpha: f64) -> (f64, f64) {
    debug_assert!(cos_alpha > 0.0 && cos_alpha <= 1.0);
    (r * cos_alpha, var_r * cos_alpha * cos_alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn principal_point_is_identity() {
        assert_eq!(depth_to_range(1234.5, 6.7, 1.0), (1234.5, 6.7));
    }

    #[test]
    fn oblique_ray() {
        let (r, v) = depth_to_range(800.0, 1.6, 0.8);
        assert!((r - 1000.0).abs() < 1e-12);
        assert!((v - 2.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn round_trip(z in 1.0f64..10_000.0, var in 0.0f64..1e3, c in 0.05f64..=1.0) {
            let (r, vr) = depth_to_range(z, var, c);
            let (z2, v2) = range_to_depth(r, vr, c);
            prop_assert!((z2 - z).abs() <= 1e-12 * z);
            prop_assert!((v2 - var).abs() <= 1e-12 * var.max(f64::MIN_POSITIVE));
        }
    }
}
