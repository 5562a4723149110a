use nalgebra::{Vector2, Vector3};

/// Image line `a·u + b·v + c = 0` with `(a, b)` of unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line2 {
    pub coeffs: Vector3<f64>,
}

impl Line2 {
    /// Line through two distinct image points. Returns `None` when they coincide.
    pub fn through(p1: &Vector2<f64>, p2: &Vector2<f64>) -> Option<Self> {
        let d = p2 - p1;
        let len = d.norm();
        if !(len > 0.0) {
            return None;
        }
        let n = Vector2::new(-d.y, d.x) / len;
        let c = -n.dot(p1);
        Some(Line2 {
            coeffs: Vector3::new(n.x, n.y, c),
        })
    }

    /// Signed distance of an image point to the line, in pixels.
    pub fn signed_distance(&self, p: &Vector2<f64>) -> f64 {
        self.coeffs.x * p.x + self.coeffs.y * p.y + self.coeffs.z
    }

    /// Slope angle of the line in `[0, π)`.
    pub fn slope_angle(&self) -> f64 {
        // direction is the normal rotated by -90°
        let ang = (-self.coeffs.x).atan2(self.coeffs.y);
        ang.rem_euclid(std::f64::consts::PI)
    }

    /// Distance from the image origin (top-left corner).
    pub fn origin_distance(&self) -> f64 {
        self.coeffs.z.abs()
    }
}

/// Smallest absolute difference between two slope angles modulo π.
pub(crate) fn slope_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::PI);
    d.min(std::f64::consts::PI - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizontal_line_distance() {
        let l = Line2::through(&Vector2::new(0.0, 10.0), &Vector2::new(50.0, 10.0)).unwrap();
        assert!((l.signed_distance(&Vector2::new(20.0, 15.0)).abs() - 5.0).abs() < 1e-12);
        assert!(l.slope_angle().abs() < 1e-12);
        assert!((l.origin_distance() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn slope_wraps() {
        assert!((slope_difference(0.01, std::f64::consts::PI - 0.01) - 0.02).abs() < 1e-12);
        let l = Line2::through(&Vector2::new(0.0, 0.0), &Vector2::new(-1.0, -1.0)).unwrap();
        assert!((l.slope_angle() - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn coincident_points_have_no_line() {
        assert!(Line2::through(&Vector2::new(1.0, 1.0), &Vector2::new(1.0, 1.0)).is_none());
    }
}
