use nalgebra::{Matrix6, RowVector6, SymmetricEigen, Vector6};

use super::residual::{line_residual, plane_residual, point_residual, LineMatch, PlaneMatch, PointMatch};
use super::se3::Pose;
use crate::geometry::CameraIntrinsics;
use crate::{Error, Result};

/// Tukey biweight tuning constant.
pub const TUKEY_C: f64 = 4.685;

const MAD_TO_SIGMA: f64 = 1.4826;

/// Tukey biweight `(1 − (r/(c s))²)²` inside the cutoff, zero outside.
pub fn tukey_weight(r: f64, scale: f64) -> f64 {
    biweight(r, scale, TUKEY_C)
}

fn biweight(r: f64, scale: f64, c: f64) -> f64 {
    if scale <= 0.0 {
        return 1.0;
    }
    let u = r / (c * scale);
    if u.abs() >= 1.0 {
        0.0
    } else {
        let a = 1.0 - u * u;
        a * a
    }
}

/// Robust scale `1.4826 · median(|x|)`.
pub fn mad_scale(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    abs.sort_by(|a, b| a.total_cmp(b));
    let n = abs.len();
    let median = if n % 2 == 1 {
        abs[n / 2]
    } else {
        0.5 * (abs[n / 2 - 1] + abs[n / 2])
    };
    MAD_TO_SIGMA * median
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub step_tolerance: f64,
    pub cost_tolerance: f64,
    /// Extra weight on plane residuals, which are exempt from the robust kernel.
    pub plane_weight: f64,
    /// Smallest match population for which the robust scale is estimated.
    pub min_robust_population: usize,
    /// Smallest admissible ratio of Jacobi-scaled Hessian eigenvalues.
    pub degeneracy_ratio: f64,
    /// Smallest admissible quaternion scalar part.
    pub min_q4: f64,
    pub robust: bool,
    pub tukey_c: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            initial_damping: 1e-4,
            step_tolerance: 1e-8,
            cost_tolerance: 1e-10,
            plane_weight: 0.02,
            min_robust_population: 8,
            degeneracy_ratio: 1e-10,
            min_q4: 0.1,
            robust: true,
            tukey_c: TUKEY_C,
        }
    }
}

/// Matched features between the previous frame (3D) and the current one.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseProblem {
    pub camera: CameraIntrinsics,
    pub points: Vec<PointMatch>,
    pub lines: Vec<LineMatch>,
    pub planes: Vec<PlaneMatch>,
}

impl PoseProblem {
    pub fn new(camera: CameraIntrinsics) -> Self {
        Self {
            camera,
            points: Vec::new(),
            lines: Vec::new(),
            planes: Vec::new(),
        }
    }

    pub fn residual_count(&self) -> usize {
        2 * self.points.len() + 2 * self.lines.len() + 3 * self.planes.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost_before: f64,
    pub cost_after: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    /// Transform taking previous-frame coordinates to the current frame, with
    /// its 6×6 covariance.
    pub pose: Pose,
    pub converged: bool,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    /// Root mean square of the whitened residuals at the solution.
    pub rms: f64,
    pub points_used: usize,
    pub lines_used: usize,
    pub planes_used: usize,
}

#[derive(Clone, Copy)]
enum Kind {
    Point,
    Line,
    Plane,
}

struct Row {
    j: RowVector6<f64>,
    r: f64,
    var: f64,
    kind: Kind,
    group: usize,
}

struct Active<'a> {
    camera: &'a CameraIntrinsics,
    points: Vec<&'a PointMatch>,
    lines: Vec<&'a LineMatch>,
    planes: &'a [PlaneMatch],
}

impl Active<'_> {
    fn rows(&self, pose: &Pose) -> Result<Vec<Row>> {
        let mut rows = Vec::with_capacity(2 * self.points.len() + 2 * self.lines.len() + 3 * self.planes.len());
        for (g, m) in self.points.iter().enumerate() {
            let r = point_residual(m, pose, self.camera)?;
            for i in 0..2 {
                rows.push(Row {
                    j: r.jacobian.row(i).into_owned(),
                    r: r.value[i],
                    var: r.variance[i],
                    kind: Kind::Point,
                    group: g,
                });
            }
        }
        for (g, m) in self.lines.iter().enumerate() {
            let r = line_residual(m, pose, self.camera)?;
            for i in 0..2 {
                rows.push(Row {
                    j: r.jacobian.row(i).into_owned(),
                    r: r.value[i],
                    var: r.variance[i],
                    kind: Kind::Line,
                    group: g,
                });
            }
        }
        for (g, m) in self.planes.iter().enumerate() {
            let r = plane_residual(m, pose)?;
            for i in 0..3 {
                rows.push(Row {
                    j: r.jacobian.row(i).into_owned(),
                    r: r.value[i],
                    var: r.variance[i],
                    kind: Kind::Plane,
                    group: g,
                });
            }
        }
        Ok(rows)
    }
}

fn robust_weights(rows: &[Row], n_points: usize, n_lines: usize, params: &SolverParams) -> Vec<f64> {
    let mut point_mag = vec![0.0; n_points];
    let mut line_mag = vec![0.0; n_lines];
    for row in rows {
        let e = row.r * row.r / row.var;
        match row.kind {
            Kind::Point => point_mag[row.group] += e,
            Kind::Line => line_mag[row.group] += e,
            Kind::Plane => {}
        }
    }
    let kernel = |mag: &mut Vec<f64>| {
        mag.iter_mut().for_each(|m| *m = m.sqrt());
        let scale = if params.robust && mag.len() >= params.min_robust_population {
            mad_scale(mag)
        } else {
            0.0
        };
        if scale > 0.0 {
            mag.iter().map(|&m| biweight(m, scale, params.tukey_c)).collect()
        } else {
            vec![1.0; mag.len()]
        }
    };
    let point_w = kernel(&mut point_mag);
    let line_w = kernel(&mut line_mag);
    rows.iter()
        .map(|row| {
            let base = 1.0 / row.var;
            match row.kind {
                Kind::Point => base * point_w[row.group],
                Kind::Line => base * line_w[row.group],
                Kind::Plane => base * params.plane_weight,
            }
        })
        .collect()
}

fn cost(rows: &[Row], w: &[f64]) -> f64 {
    rows.iter().zip(w).map(|(row, w)| w * row.r * row.r).sum()
}

fn normal_equations(rows: &[Row], w: &[f64]) -> (Matrix6<f64>, Vector6<f64>) {
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    for (row, &w) in rows.iter().zip(w) {
        h += row.j.transpose() * row.j * w;
        g += row.j.transpose() * (w * row.r);
    }
    (h, g)
}

fn check_conditioning(h: &Matrix6<f64>, ratio: f64) -> Result<()> {
    let d = h.diagonal();
    if d.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Degenerate("a pose parameter is unconstrained".into()));
    }
    let s = d.map(|x| 1.0 / x.sqrt());
    let scaled = Matrix6::from_diagonal(&s) * h * Matrix6::from_diagonal(&s);
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo / hi < ratio {
        return Err(Error::Degenerate(format!("information matrix eigenvalue ratio {:.3e}", lo / hi)));
    }
    Ok(())
}

/// Robust Levenberg-Marquardt estimate of the relative pose.
///
/// Weights combine each residual's inverse variance with a Tukey biweight on
/// the whitened per-match magnitude (points and lines); planes get a fixed
/// extra weight instead. Weights are refreshed at the start of every
/// iteration and held fixed while trial steps are evaluated.
pub fn estimate_pose(problem: &PoseProblem, initial: &Pose, params: &SolverParams) -> Result<PoseEstimate> {
    let active = Active {
        camera: &problem.camera,
        points: problem
            .points
            .iter()
            .filter(|m| point_residual(m, initial, &problem.camera).is_ok())
            .collect(),
        lines: problem
            .lines
            .iter()
            .filter(|m| line_residual(m, initial, &problem.camera).is_ok())
            .collect(),
        planes: &problem.planes,
    };
    let n_rows = 2 * active.points.len() + 2 * active.lines.len() + 3 * active.planes.len();
    if n_rows < 6 {
        return Err(Error::InsufficientSamples { needed: 6, have: n_rows });
    }

    let mut xi = initial.xi();
    let mut pose = Pose::from_xi(&xi)?;
    let mut rows = active.rows(&pose)?;
    if rows.iter().any(|r| !(r.var > 0.0) || !r.r.is_finite()) {
        return Err(Error::NumericDegeneracy("non-positive residual variance".into()));
    }
    let mut weights = robust_weights(&rows, active.points.len(), active.lines.len(), params);
    let (h0, _) = normal_equations(&rows, &weights);
    check_conditioning(&h0, params.degeneracy_ratio)?;

    let mut lambda = params.initial_damping;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        let (h, g) = normal_equations(&rows, &weights);
        let current = cost(&rows, &weights);
        if current == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e12 {
            let mut damped = h;
            for i in 0..6 {
                damped[(i, i)] += lambda * h[(i, i)];
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial_xi = xi + step;
            let trial_rows = Pose::from_xi(&trial_xi)
                .ok()
                .filter(|p| p.q4() >= params.min_q4)
                .and_then(|p| active.rows(&p).ok().map(|rows| (p, rows)));
            let Some((trial_pose, trial_rows)) = trial_rows else {
                lambda *= 10.0;
                continue;
            };
            let trial_cost = cost(&trial_rows, &weights);
            if trial_cost < current {
                history.push(IterationRecord {
                    iteration: iterations,
                    cost_before: current,
                    cost_after: trial_cost,
                    damping: lambda,
                });
                let small_step = step.norm() < params.step_tolerance * (xi.norm() + params.step_tolerance);
                let small_gain = (current - trial_cost) < params.cost_tolerance * current;
                xi = trial_xi;
                pose = trial_pose;
                rows = trial_rows;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                converged = small_step || small_gain;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No descent direction left at this weighting: a numerical minimum.
            converged = true;
            break;
        }
        if converged {
            break;
        }
        weights = robust_weights(&rows, active.points.len(), active.lines.len(), params);
    }

    if pose.q4() < params.min_q4 {
        return Err(Error::RotationRange(pose.q4()));
    }
    weights = robust_weights(&rows, active.points.len(), active.lines.len(), params);
    let (h, _) = normal_equations(&rows, &weights);
    check_conditioning(&h, params.degeneracy_ratio)?;
    let cov = h
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("information matrix is singular".into()))?;
    let cov = (cov + cov.transpose()) * 0.5;
    let rms = (rows.iter().map(|r| r.r * r.r / r.var).sum::<f64>() / rows.len() as f64).sqrt();
    Ok(PoseEstimate {
        pose: pose.with_cov(cov),
        converged,
        iterations,
        history,
        rms,
        points_used: active.points.len(),
        lines_used: active.lines.len(),
        planes_used: active.planes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Line2, PlaneParams, Point3};
    use nalgebra::{Unit, UnitQuaternion, Vector2, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn truth() -> Pose {
        Pose::new(
            UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vector3::new(0.2, 1.0, -0.3)), 0.05),
            Vector3::new(30.0, -12.0, 45.0),
        )
    }

    fn scene_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-900.0..900.0),
                    rng.random_range(-700.0..700.0),
                    rng.random_range(1500.0..4000.0),
                )
            })
            .collect()
    }

    fn point_problem(n: usize, noise_px: f64, seed: u64) -> PoseProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = CameraIntrinsics::tum_default();
        let t = truth();
        let noise = Normal::new(0.0, noise_px.max(1e-300)).unwrap();
        let mut problem = PoseProblem::new(k);
        for p in scene_points(&mut rng, n) {
            let mut obs = k.project(&t.transform_point(&p));
            if noise_px > 0.0 {
                obs += Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
            }
            problem.points.push(PointMatch {
                point: Point3::isotropic(p, 4.0),
                observed: obs,
            });
        }
        problem
    }

    #[test]
    fn tukey_values() {
        assert_eq!(tukey_weight(0.0, 1.0), 1.0);
        assert!((tukey_weight(TUKEY_C / 2.0, 1.0) - 0.5625).abs() < 1e-12);
        assert_eq!(tukey_weight(TUKEY_C, 1.0), 0.0);
        assert_eq!(tukey_weight(-10.0, 1.0), 0.0);
    }

    #[test]
    fn mad_of_known_set() {
        assert!((mad_scale(&[1.0, -2.0, 3.0]) - 1.4826 * 2.0).abs() < 1e-12);
        assert!((mad_scale(&[1.0, 2.0, 3.0, 4.0]) - 1.4826 * 2.5).abs() < 1e-12);
    }

    #[test]
    fn recovers_pose_from_noiseless_points() {
        let problem = point_problem(30, 0.0, 1);
        let est = estimate_pose(&problem, &Pose::identity(), &SolverParams::default()).unwrap();
        let t = truth();
        assert!(est.converged);
        assert!((est.pose.translation - t.translation).norm() < 1e-6);
        assert!(est.pose.rotation.angle_to(&t.rotation) < 1e-8);
    }

    #[test]
    fn recovers_pose_from_orthogonal_planes() {
        let t = truth();
        let mut problem = PoseProblem::new(CameraIntrinsics::tum_default());
        for (n, d) in [
            (Vector3::new(1.0, 0.0, 0.0), 800.0),
            (Vector3::new(0.0, 1.0, 0.0), 600.0),
            (Vector3::new(0.0, 0.0, -1.0), 2500.0),
        ] {
            let mut prev = PlaneParams::from_hessian(n, d).unwrap();
            prev.cov_theta = nalgebra::Matrix4::identity() * 1e-6;
            let mut cur = prev.transformed(&t.rotation.to_rotation_matrix(), &t.translation).unwrap();
            cur.cov_theta = prev.cov_theta;
            problem.planes.push(PlaneMatch { previous: prev, current: cur });
        }
        let est = estimate_pose(&problem, &Pose::identity(), &SolverParams::default()).unwrap();
        assert!((est.pose.translation - t.translation).norm() < 1e-6);
        assert!(est.pose.rotation.angle_to(&t.rotation) < 1e-8);
    }

    #[test]
    fn parallel_planes_are_degenerate() {
        let mut problem = PoseProblem::new(CameraIntrinsics::tum_default());
        for d in [1000.0, 1500.0, 2000.0] {
            let mut p = PlaneParams::from_hessian(Vector3::new(0.0, 0.0, -1.0), d).unwrap();
            p.cov_theta = nalgebra::Matrix4::identity() * 1e-6;
            problem.planes.push(PlaneMatch { previous: p, current: p });
        }
        let r = estimate_pose(&problem, &Pose::identity(), &SolverParams::default());
        assert!(matches!(r, Err(Error::Degenerate(_))), "{r:?}");
    }

    #[test]
    fn too_few_residuals() {
        let problem = point_problem(2, 0.0, 2);
        assert!(matches!(
            estimate_pose(&problem, &Pose::identity(), &SolverParams::default()),
            Err(Error::InsufficientSamples { needed: 6, have: 4 })
        ));
    }

    #[test]
    fn accepted_steps_never_increase_cost() {
        let problem = point_problem(60, 1.0, 3);
        let est = estimate_pose(&problem, &Pose::identity(), &SolverParams::default()).unwrap();
        assert!(!est.history.is_empty());
        for rec in &est.history {
            assert!(rec.cost_after <= rec.cost_before);
        }
    }

    #[test]
    fn covariance_shrinks_with_more_matches() {
        let small = estimate_pose(&point_problem(50, 1.0, 4), &Pose::identity(), &SolverParams::default()).unwrap();
        let large = estimate_pose(&point_problem(100, 1.0, 4), &Pose::identity(), &SolverParams::default()).unwrap();
        assert!(large.pose.cov.trace() < small.pose.cov.trace());
        assert!(large.pose.cov.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn outliers_are_suppressed() {
        let mut problem = point_problem(80, 0.5, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for m in problem.points.iter_mut().take(8) {
            m.observed += Vector2::new(rng.random_range(30.0..60.0), rng.random_range(-60.0..-30.0));
        }
        let est = estimate_pose(&problem, &Pose::identity(), &SolverParams::default()).unwrap();
        assert!((est.pose.translation - truth().translation).norm() < 5.0);
    }

    #[test]
    fn lines_constrain_pose() {
        let k = CameraIntrinsics::tum_default();
        let t = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut problem = point_problem(6, 0.0, 8);
        let pts = scene_points(&mut rng, 40);
        for pair in pts.chunks(2) {
            let (a, b) = (t.transform_point(&pair[0]), t.transform_point(&pair[1]));
            let observed = Line2::through(&k.project(&a), &k.project(&b)).unwrap();
            problem.lines.push(LineMatch {
                endpoints: [Point3::isotropic(pair[0], 4.0), Point3::isotropic(pair[1], 4.0)],
                observed,
            });
        }
        let est = estimate_pose(&problem, &Pose::identity(), &SolverParams::default()).unwrap();
        assert!((est.pose.translation - t.translation).norm() < 1e-5);
        assert_eq!(est.lines_used, 20);
    }

    #[test]
    fn cheirality_violations_are_dropped() {
        let mut problem = point_problem(20, 0.0, 9);
        problem.points.push(PointMatch {
            point: Point3::isotropic(Vector3::new(0.0, 0.0, -500.0), 1.0),
            observed: Vector2::new(10.0, 10.0),
        });
        let est = estimate_pose(&problem, &Pose::identity(), &SolverParams::default()).unwrap();
        assert_eq!(est.points_used, 20);
    }
}
