use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Point3;
use crate::depth_filter::DepthMap;
use crate::{Error, Result};

/// Upper bound on depth samples taken along an image segment.
pub const MAX_LINE_SAMPLES: usize = 100;

/// Offset applied to a centred point whose line residual is exactly zero, in mm.
const ZERO_RESIDUAL_PERTURBATION: f64 = 1e-6;

/// 3D line anchored at a weighted centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct Line3 {
    pub origin: Vector3<f64>,
    pub cov_origin: Matrix3<f64>,
    /// Direction with `direction[fixed_dim] == 1`.
    pub direction: Vector3<f64>,
    pub fixed_dim: usize,
    /// Direction covariance; row and column `fixed_dim` are zero.
    pub cov_direction: Matrix3<f64>,
    pub endpoints: [Point3; 2],
    pub lambda: [f64; 2],
}

impl Line3 {
    pub fn unit_direction(&self) -> Vector3<f64> {
        self.direction.normalize()
    }

    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        (p - self.origin).cross(&self.unit_direction()).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// Point-to-line inlier distance in mm.
    pub threshold: f64,
    pub iterations: usize,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            threshold: 20.0,
            iterations: 50,
            min_inliers: 6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFitParams {
    pub ransac: RansacParams,
}

impl Default for LineFitParams {
    fn default() -> Self {
        LineFitParams {
            ransac: RansacParams::default(),
        }
    }
}

/// Samples valid depth pixels uniformly along an image segment.
///
/// Returns `(u, v, z)` triples, at most [`MAX_LINE_SAMPLES`].
pub fn sample_line_pixels(
    p1: &Vector2<f64>,
    p2: &Vector2<f64>,
    depth: &DepthMap,
) -> Result<Vec<(usize, usize, f64)>> {
    let inside = |p: &Vector2<f64>| {
        p.x >= -0.5
            && p.y >= -0.5
            && p.x < depth.width() as f64 - 0.5
            && p.y < depth.height() as f64 - 0.5
    };
    if !inside(p1) || !inside(p2) {
        return Err(Error::InputDomain("line endpoints outside the image".into()));
    }
    let d = p2 - p1;
    let pixels = d.x.abs().max(d.y.abs()).round() as usize + 1;
    let n = pixels.min(MAX_LINE_SAMPLES);
    let mut out = Vec::with_capacity(n);
    let mut last = None;
    for i in 0..n {
        let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        let p = p1 + d * t;
        let (u, v) = (p.x.round() as usize, p.y.round() as usize);
        if last == Some((u, v)) {
            continue;
        }
        last = Some((u, v));
        let z = depth.get(u, v);
        if z > 0.0 {
            out.push((u, v, z));
        }
    }
    if out.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            have: out.len(),
        });
    }
    Ok(out)
}

fn point_line_distance(p: &Vector3<f64>, a: &Vector3<f64>, dir: &Vector3<f64>) -> f64 {
    (p - a).cross(dir).norm()
}

/// RANSAC over two-point line hypotheses with Euclidean point-to-line distance.
///
/// Returns the indices of the largest consensus set in input order.
pub fn ransac_line(points: &[Point3], params: &RansacParams) -> Result<Vec<usize>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, have: n });
    }
    let mut best: Vec<usize> = Vec::new();
    let consider = |i: usize, j: usize, best: &mut Vec<usize>| {
        let dir = points[j].p - points[i].p;
        let len = dir.norm();
        if !(len > 0.0) {
            return;
        }
        let dir = dir / len;
        let inliers: Vec<usize> = (0..n)
            .filter(|&k| point_line_distance(&points[k].p, &points[i].p, &dir) <= params.threshold)
            .collect();
        if inliers.len() > best.len() {
            *best = inliers;
        }
    };
    if n == 2 {
        consider(0, 1, &mut best);
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for _ in 0..params.iterations {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            consider(i, j, &mut best);
            if best.len() == n {
                break;
            }
        }
    }
    if best.len() < params.min_inliers.max(2) {
        return Err(Error::InsufficientSamples {
            needed: params.min_inliers.max(2),
            have: best.len(),
        });
    }
    Ok(best)
}

/// Weighted second moments of centred points.
#[derive(Default)]
struct Moments {
    xx: f64,
    yy: f64,
    zz: f64,
    xy: f64,
    xz: f64,
    yz: f64,
}

impl Moments {
    fn accumulate(points: &[Vector3<f64>], weights: &[f64]) -> Self {
        let mut m = Moments::default();
        for (p, &w) in points.iter().zip(weights) {
            m.xx += w * p.x * p.x;
            m.yy += w * p.y * p.y;
            m.zz += w * p.z * p.z;
            m.xy += w * p.x * p.y;
            m.xz += w * p.x * p.z;
            m.yz += w * p.y * p.z;
        }
        m
    }

    /// Normal system for the two free direction components when component
    /// `fixed` is pinned to one.
    fn system(&self, fixed: usize) -> (Matrix2<f64>, Vector2<f64>) {
        match fixed {
            0 => (
                Matrix2::new(self.xx + self.zz, -self.yz, -self.yz, self.xx + self.yy),
                Vector2::new(self.xy, self.xz),
            ),
            1 => (
                Matrix2::new(self.yy + self.zz, -self.xz, -self.xz, self.xx + self.yy),
                Vector2::new(self.xy, self.yz),
            ),
            _ => (
                Matrix2::new(self.yy + self.zz, -self.xy, -self.xy, self.xx + self.zz),
                Vector2::new(self.xz, self.yz),
            ),
        }
    }
}

fn free_dims(fixed: usize) -> [usize; 2] {
    match fixed {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    }
}

fn solve2(a: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let scale = a.abs().max();
    let det = a.determinant();
    if !(scale > 0.0) || det.abs() <= 1e-14 * scale * scale {
        return Err(Error::Degenerate("line normal equations are singular".into()));
    }
    a.try_inverse()
        .ok_or_else(|| Error::Degenerate("line normal equations are singular".into()))
}

fn any_perpendicular(v: &Vector3<f64>) -> Vector3<f64> {
    let axis = if v.x.abs() <= v.y.abs() && v.x.abs() <= v.z.abs() {
        Vector3::x()
    } else if v.y.abs() <= v.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    v.cross(&axis).normalize()
}

/// Closed-form weighted least-squares 3D line fit.
///
/// The line is pinned at the depth-weighted centroid and its direction is
/// found with one component fixed at one, chosen as the axis along which the
/// centred samples spread the most. The returned covariance uses weights
/// rectified with the propagated variance of each cross-product residual.
pub fn fit_line_wls(points: &[Point3]) -> Result<Line3> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, have: n });
    }
    let mut weights = Vec::with_capacity(n);
    for pt in points {
        let var = pt.depth_variance();
        if !(var > 0.0) {
            return Err(Error::InputDomain("point depth variance must be positive".into()));
        }
        weights.push(1.0 / var);
    }
    let total: f64 = weights.iter().sum();
    let mut origin = Vector3::zeros();
    let mut cov_origin = Matrix3::zeros();
    for (pt, &w) in points.iter().zip(&weights) {
        let wn = w / total;
        origin += wn * pt.p;
        cov_origin += wn * wn * pt.cov;
    }
    let centred: Vec<Vector3<f64>> = points.iter().map(|pt| pt.p - origin).collect();

    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in &centred {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let range = hi - lo;
    let mut fixed = 0;
    for k in 1..3 {
        if range[k] > range[fixed] {
            fixed = k;
        }
    }
    if !(range[fixed] > 0.0) {
        return Err(Error::Degenerate("line points coincide".into()));
    }

    let free = free_dims(fixed);
    let (a, b) = Moments::accumulate(&centred, &weights).system(fixed);
    let phi = solve2(&a)? * b;
    let mut direction = Vector3::zeros();
    direction[fixed] = 1.0;
    direction[free[0]] = phi[0];
    direction[free[1]] = phi[1];

    let rect: Vec<f64> = points
        .iter()
        .zip(&centred)
        .map(|(pt, p)| {
            let mut q = *p;
            let mut c = q.cross(&direction);
            if c.norm() <= f64::EPSILON * (q.norm() + 1.0) * direction.norm() {
                q += any_perpendicular(&direction) * ZERO_RESIDUAL_PERTURBATION;
                c = q.cross(&direction);
            }
            let jr = direction.cross(&c) / c.norm();
            let var = (jr.transpose() * pt.cov * jr)[0];
            1.0 / var
        })
        .collect();
    if rect.iter().any(|w| !w.is_finite()) {
        return Err(Error::NumericDegeneracy("zero line residual variance".into()));
    }
    let (a_rect, _) = Moments::accumulate(&centred, &rect).system(fixed);
    let cov_phi = solve2(&a_rect)?;
    let mut cov_direction = Matrix3::zeros();
    for (i, &fi) in free.iter().enumerate() {
        for (j, &fj) in free.iter().enumerate() {
            cov_direction[(fi, fj)] = cov_phi[(i, j)];
        }
    }
    let cov_direction = (cov_direction + cov_direction.transpose()) * 0.5;

    let n2 = direction.norm_squared();
    let lambdas: Vec<f64> = centred.iter().map(|p| direction.dot(p) / n2).collect();
    let (mut imin, mut imax) = (0, 0);
    for (i, &l) in lambdas.iter().enumerate() {
        if l < lambdas[imin] {
            imin = i;
        }
        if l > lambdas[imax] {
            imax = i;
        }
    }
    let j_origin = Matrix3::identity() - direction * direction.transpose() / n2;
    let endpoint = |i: usize| {
        let lambda = lambdas[i];
        let p = origin + direction * lambda;
        let dl = centred[i].transpose() / n2 - direction.transpose() * (2.0 * lambda / n2);
        let j_dir = Matrix3::identity() * lambda + direction * dl;
        let cov = j_origin * cov_origin * j_origin.transpose()
            + j_dir * cov_direction * j_dir.transpose();
        Point3::new(p, (cov + cov.transpose()) * 0.5)
    };

    Ok(Line3 {
        origin,
        cov_origin,
        direction,
        fixed_dim: fixed,
        cov_direction,
        endpoints: [endpoint(imin), endpoint(imax)],
        lambda: [lambdas[imin], lambdas[imax]],
    })
}
