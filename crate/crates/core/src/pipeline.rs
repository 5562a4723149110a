//! Per-frame odometry loop: filter, segment, match, estimate, fuse, re-fit.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Isometry3, Matrix6, Translation3};
use serde::{Deserialize, Serialize};

use crate::depth_filter::{
    gm_convolve, temporal_fuse, variance_map, CosineMap, DepthMap, FusionParams, RangePointWindow,
    SensorNoiseModel, VarianceMap, WindowFrame,
};
use crate::eval::Trajectory;
use crate::geometry::{
    backproject, fit_line_wls, ransac_line, sample_line_pixels, segment_planes, CameraIntrinsics,
    Line3, OrganizedCloud, PlaneSegment, Point3, RansacParams, SegmentParams,
};
use crate::io::{FeatureFile, DEFAULT_DEPTH_SCALE};
use crate::matching::{match_lines, match_planes, match_points, FeatureFrame, MatchParams, MatchSets};
use crate::pose::{
    estimate_pose, translation_eigen_max, validate_pose, LineMatch, PlaneMatch, PointMatch, Pose,
    PoseEstimate, PoseProblem, SolverParams,
};
use crate::{Error, Result};

/// Feature types used for pose estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "points")]
    Points,
    #[serde(rename = "points+lines")]
    PointsLines,
    #[serde(rename = "points+planes")]
    PointsPlanes,
    #[serde(rename = "all")]
    All,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 4] = [
        FeatureSet::Points,
        FeatureSet::PointsLines,
        FeatureSet::PointsPlanes,
        FeatureSet::All,
    ];

    pub fn lines(self) -> bool {
        matches!(self, FeatureSet::PointsLines | FeatureSet::All)
    }

    pub fn planes(self) -> bool {
        matches!(self, FeatureSet::PointsPlanes | FeatureSet::All)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Points => "points",
            FeatureSet::PointsLines => "points+lines",
            FeatureSet::PointsPlanes => "points+planes",
            FeatureSet::All => "all",
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FeatureSet::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature set `{s}`")))
    }
}

/// Depth used for feature geometry: raw sensor depth, the spatially convolved
/// map, or the temporally fused map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthModel {
    Sensor,
    Cgm,
    Ogm,
}

impl DepthModel {
    pub const ALL: [DepthModel; 3] = [DepthModel::Sensor, DepthModel::Cgm, DepthModel::Ogm];

    pub fn as_str(self) -> &'static str {
        match self {
            DepthModel::Sensor => "sensor",
            DepthModel::Cgm => "cgm",
            DepthModel::Ogm => "ogm",
        }
    }
}

impl fmt::Display for DepthModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DepthModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DepthModel::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown depth model `{s}`")))
    }
}

/// Every tunable of the pipeline. Loaded from TOML with flat keys; unknown
/// keys are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdometryConfig {
    pub features: FeatureSet,
    pub depth_model: DepthModel,
    pub depth_scale: f64,
    /// Quadratic coefficient of the depth noise model, in 1/mm.
    pub noise_quadratic: f64,

    pub window_len: usize,
    pub gate_min_members: usize,
    pub gate_sigma: f64,
    /// Largest translation covariance eigenvalue of a window frame, in mm².
    pub prune_threshold: f64,
    /// Largest translation covariance eigenvalue of an accepted pose, in mm².
    pub validate_threshold: f64,
    pub velocity_decay: f64,

    pub plane_weight: f64,
    pub tukey_c: f64,
    pub max_iterations: usize,

    pub ransac_threshold: f64,
    pub ransac_iterations: usize,
    pub ransac_min_inliers: usize,
    pub seed: u64,

    pub match_ratio: f64,
    pub max_pixel_dist: f64,
    pub max_line_angle_deg: f64,
    pub max_line_origin_diff: f64,
    pub max_plane_angle_deg: f64,
    pub max_plane_offset: f64,
    pub min_plane_overlap: f64,

    pub segment_distance: f64,
    pub segment_angle_deg: f64,
    pub segment_min_inliers: usize,
    pub segment_normal_radius: usize,
}

impl Default for OdometryConfig {
    fn default() -> Self {
        let m = MatchParams::default();
        let s = SegmentParams::default();
        let r = RansacParams::default();
        let f = FusionParams::default();
        let solver = SolverParams::default();
        Self {
            features: FeatureSet::All,
            depth_model: DepthModel::Ogm,
            depth_scale: DEFAULT_DEPTH_SCALE,
            noise_quadratic: SensorNoiseModel::default().quadratic,
            window_len: crate::depth_filter::DEFAULT_WINDOW_LEN,
            gate_min_members: f.gate_min_members,
            gate_sigma: f.gate_sigma,
            prune_threshold: 25.0,
            validate_threshold: 25.0,
            velocity_decay: 0.9,
            plane_weight: solver.plane_weight,
            tukey_c: solver.tukey_c,
            max_iterations: solver.max_iterations,
            ransac_threshold: r.threshold,
            ransac_iterations: r.iterations,
            ransac_min_inliers: r.min_inliers,
            seed: r.seed,
            match_ratio: m.ratio,
            max_pixel_dist: m.max_pixel_dist,
            max_line_angle_deg: m.max_line_angle_deg,
            max_line_origin_diff: m.max_line_origin_diff,
            max_plane_angle_deg: m.max_plane_angle_deg,
            max_plane_offset: m.max_plane_offset,
            min_plane_overlap: m.min_plane_overlap,
            segment_distance: s.distance_threshold,
            segment_angle_deg: s.angle_threshold_deg,
            segment_min_inliers: s.min_inliers,
            segment_normal_radius: s.normal_radius,
        }
    }
}

impl OdometryConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::file(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("depth_scale", self.depth_scale),
            ("noise_quadratic", self.noise_quadratic),
            ("gate_sigma", self.gate_sigma),
            ("prune_threshold", self.prune_threshold),
            ("validate_threshold", self.validate_threshold),
            ("plane_weight", self.plane_weight),
            ("tukey_c", self.tukey_c),
            ("ransac_threshold", self.ransac_threshold),
            ("match_ratio", self.match_ratio),
            ("max_pixel_dist", self.max_pixel_dist),
            ("segment_distance", self.segment_distance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("`{name}` must be positive, got {v}")));
            }
        }
        if !(self.velocity_decay > 0.0 && self.velocity_decay <= 1.0) {
            return Err(Error::Config("`velocity_decay` must lie in (0, 1]".into()));
        }
        if self.window_len == 0 || self.max_iterations == 0 || self.ransac_iterations == 0 {
            return Err(Error::Config(
                "`window_len`, `max_iterations` and `ransac_iterations` must be non-zero".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.min_plane_overlap) {
            return Err(Error::Config("`min_plane_overlap` must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn noise_model(&self) -> SensorNoiseModel {
        SensorNoiseModel {
            quadratic: self.noise_quadratic,
        }
    }

    pub fn fusion_params(&self) -> FusionParams {
        FusionParams {
            gate_min_members: self.gate_min_members,
            gate_sigma: self.gate_sigma,
        }
    }

    pub fn match_params(&self) -> MatchParams {
        MatchParams {
            ratio: self.match_ratio,
            max_pixel_dist: self.max_pixel_dist,
            max_line_angle_deg: self.max_line_angle_deg,
            max_line_origin_diff: self.max_line_origin_diff,
            max_plane_angle_deg: self.max_plane_angle_deg,
            max_plane_offset: self.max_plane_offset,
            min_plane_overlap: self.min_plane_overlap,
        }
    }

    pub fn segment_params(&self) -> SegmentParams {
        SegmentParams {
            distance_threshold: self.segment_distance,
            angle_threshold_deg: self.segment_angle_deg,
            min_inliers: self.segment_min_inliers,
            normal_radius: self.segment_normal_radius,
        }
    }

    pub fn solver_params(&self) -> SolverParams {
        SolverParams {
            plane_weight: self.plane_weight,
            tukey_c: self.tukey_c,
            max_iterations: self.max_iterations,
            ..SolverParams::default()
        }
    }

    pub fn ransac_params(&self, seed: u64) -> RansacParams {
        RansacParams {
            threshold: self.ransac_threshold,
            iterations: self.ransac_iterations,
            min_inliers: self.ransac_min_inliers,
            seed,
        }
    }
}

/// Covariance given to a pose that has no motion history to extrapolate.
const UNKNOWN_MOTION_VARIANCE: f64 = 1e6;

/// Decaying constant-velocity guess used when the estimate is rejected.
///
/// Translation is scaled by `decay`, rotation slerped towards identity by the
/// same factor, and the covariance inflated by `1/decay²`.
pub fn velocity_fallback(previous: Option<&Pose>, decay: f64) -> Pose {
    match previous {
        Some(p) => p.scaled(decay).with_cov(p.cov / (decay * decay)),
        None => Pose::identity().with_cov(Matrix6::identity() * UNKNOWN_MOTION_VARIANCE),
    }
}

/// Per-frame diagnostics row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameDiagnostics {
    pub frame: u64,
    pub timestamp: f64,
    pub point_matches: usize,
    pub line_matches: usize,
    pub plane_matches: usize,
    pub residual_rms: f64,
    pub iterations: usize,
    /// Largest eigenvalue of the translation covariance, in mm².
    pub lambda_max: f64,
    pub fallback: bool,
    pub window_len: usize,
}

impl FrameDiagnostics {
    pub const CSV_HEADER: &'static str =
        "frame,timestamp,point_matches,line_matches,plane_matches,residual_rms,iterations,lambda_max_mm2,fallback,window_len";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{},{},{},{:.6},{},{:.6},{},{}",
            self.frame,
            self.timestamp,
            self.point_matches,
            self.line_matches,
            self.plane_matches,
            self.residual_rms,
            self.iterations,
            self.lambda_max,
            self.fallback as u8,
            self.window_len
        )
    }
}

/// Result of processing one frame.
#[derive(Debug, Clone)]
pub struct FrameState {
    pub id: u64,
    pub timestamp: f64,
    pub raw_depth: DepthMap,
    pub fused_depth: DepthMap,
    pub fused_var: VarianceMap,
    /// Features with 3D geometry fitted on the fused maps.
    pub features: FeatureFrame,
    /// Transform from the previous frame into this one.
    pub relative: Pose,
    /// Camera-to-world pose, translation in mm.
    pub world: Isometry3<f64>,
    pub diagnostics: FrameDiagnostics,
}

struct Previous {
    timestamp: f64,
    features: FeatureFrame,
}

/// Stateful odometry over a frame stream.
pub struct Odometry {
    config: OdometryConfig,
    camera: CameraIntrinsics,
    cosines: CosineMap,
    window: RangePointWindow,
    previous: Option<Previous>,
    last_relative: Option<Pose>,
    world: Isometry3<f64>,
    trajectory: Trajectory,
    next_id: u64,
}

fn pose_isometry(p: &Pose) -> Isometry3<f64> {
    Isometry3::from_parts(Translation3::from(p.translation), p.rotation)
}

impl Odometry {
    pub fn new(config: OdometryConfig, camera: CameraIntrinsics) -> Result<Self> {
        config.validate()?;
        camera.validate()?;
        Ok(Self {
            config,
            camera,
            cosines: CosineMap::new(&camera),
            window: RangePointWindow::new(config.window_len),
            previous: None,
            last_relative: None,
            world: Isometry3::identity(),
            trajectory: Trajectory::default(),
            next_id: 0,
        })
    }

    pub fn config(&self) -> &OdometryConfig {
        &self.config
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn window(&self) -> &RangePointWindow {
        &self.window
    }

    /// Starts the trajectory at a known camera-to-world pose instead of identity.
    pub fn set_origin(&mut self, world: Isometry3<f64>) {
        if self.previous.is_none() {
            self.world = world;
        }
    }

    /// Runs the full loop on one frame. Returns `None` when the frame is
    /// dropped because its timestamp does not advance.
    pub fn process_frame(
        &mut self,
        timestamp: f64,
        features: FeatureFile,
        raw_depth: DepthMap,
    ) -> Result<Option<FrameState>> {
        if raw_depth.dims() != (self.camera.width, self.camera.height) {
            return Err(Error::SizeMismatch {
                expected: (self.camera.width, self.camera.height),
                got: raw_depth.dims(),
            });
        }
        if let Some(prev) = &self.previous {
            if !(timestamp > prev.timestamp) {
                log::warn!("dropping frame at {timestamp:.6}: timestamp does not advance");
                return Ok(None);
            }
        }
        let cfg = self.config;
        let id = self.next_id;
        self.next_id += 1;

        // Sensor variance and spatial convolution.
        let sensor_var = variance_map(&raw_depth, &cfg.noise_model());
        let (cgm_depth, cgm_var) = gm_convolve(&raw_depth, &sensor_var)?;
        let (work_depth, work_var) = match cfg.depth_model {
            DepthModel::Sensor => (&raw_depth, &sensor_var),
            _ => (&cgm_depth, &cgm_var),
        };

        let mut current = features.into_frame();
        let mut matches = MatchSets::default();
        let mut estimate: Option<Result<PoseEstimate>> = None;

        if let Some(prev) = &self.previous {
            if cfg.features.planes() {
                current.planes = self.segment(work_depth, work_var);
            }
            matches = self.match_features(&prev.features, &current);
            let problem = self.pose_problem(&prev.features, &current, &matches);
            let warm = self.last_relative.clone().unwrap_or_else(Pose::identity);
            estimate = Some(estimate_pose(&problem, &warm, &cfg.solver_params()));
        }

        let (relative, fallback, rms, iterations) = match estimate {
            None => (Pose::identity(), false, 0.0, 0),
            Some(Ok(est)) if validate_pose(&est.pose.cov, cfg.validate_threshold) => {
                (est.pose, false, est.rms, est.iterations)
            }
            Some(result) => {
                match &result {
                    Ok(est) => log::debug!(
                        "frame {id}: pose rejected, translation variance {:.3} mm²",
                        translation_eigen_max(&est.pose.cov)
                    ),
                    Err(e) => log::debug!("frame {id}: pose estimation failed: {e}"),
                }
                let (rms, it) = result.map(|e| (e.rms, e.iterations)).unwrap_or((0.0, 0));
                (
                    velocity_fallback(self.last_relative.as_ref(), cfg.velocity_decay),
                    true,
                    rms,
                    it,
                )
            }
        };

        // Temporal fusion over the registered window.
        let (fused_depth, fused_var) = match cfg.depth_model {
            DepthModel::Ogm => {
                if self.previous.is_some() {
                    self.window.advance(&relative);
                    self.window.prune(cfg.prune_threshold);
                }
                let fused = temporal_fuse(
                    &self.window,
                    &cgm_depth,
                    &cgm_var,
                    &self.camera,
                    &self.cosines,
                    &cfg.fusion_params(),
                )?;
                self.window.append(WindowFrame::from_maps(
                    id,
                    &cgm_depth,
                    &cgm_var,
                    &self.camera,
                    &self.cosines,
                ));
                fused
            }
            _ => (work_depth.clone(), work_var.clone()),
        };

        // 3D features for the next frame from the fused maps.
        self.attach_geometry(&mut current, &fused_depth, &fused_var, id);

        if self.previous.is_some() {
            self.world *= pose_isometry(&relative).inverse();
            self.last_relative = Some(relative.clone());
        }
        self.trajectory.push(timestamp, self.world)?;

        let diagnostics = FrameDiagnostics {
            frame: id,
            timestamp,
            point_matches: matches.points.len(),
            line_matches: matches.lines.len(),
            plane_matches: matches.planes.len(),
            residual_rms: rms,
            iterations,
            lambda_max: translation_eigen_max(&relative.cov),
            fallback,
            window_len: self.window.len(),
        };
        self.previous = Some(Previous {
            timestamp,
            features: current.clone(),
        });
        Ok(Some(FrameState {
            id,
            timestamp,
            raw_depth,
            fused_depth,
            fused_var,
            features: current,
            relative,
            world: self.world,
            diagnostics,
        }))
    }

    fn segment(&self, depth: &DepthMap, var: &VarianceMap) -> Vec<PlaneSegment> {
        let cloud = OrganizedCloud::from_maps(depth, var, &self.camera);
        segment_planes(&cloud, &self.config.segment_params())
    }

    fn match_features(&self, prev: &FeatureFrame, cur: &FeatureFrame) -> MatchSets {
        let p = self.config.match_params();
        let set = self.config.features;
        MatchSets {
            points: match_points(prev, cur, &p),
            lines: if set.lines() { match_lines(prev, cur, &p) } else { Vec::new() },
            planes: if set.planes() {
                match_planes(&prev.planes, &cur.planes, &p)
            } else {
                Vec::new()
            },
        }
    }

    fn pose_problem(&self, prev: &FeatureFrame, cur: &FeatureFrame, m: &MatchSets) -> PoseProblem {
        let mut problem = PoseProblem::new(self.camera);
        for &(i, j) in &m.points {
            if let Some(point) = prev.points[i].point {
                problem.points.push(PointMatch {
                    point,
                    observed: cur.points[j].pixel,
                });
            }
        }
        for &(i, j) in &m.lines {
            if let (Some(line), Some(observed)) = (&prev.lines[i].line, cur.lines[j].image_line()) {
                problem.lines.push(LineMatch {
                    endpoints: line.endpoints,
                    observed,
                });
            }
        }
        for &(i, j) in &m.planes {
            problem.planes.push(PlaneMatch {
                previous: prev.planes[i].plane,
                current: cur.planes[j].plane,
            });
        }
        problem
    }

    fn attach_geometry(&self, frame: &mut FeatureFrame, depth: &DepthMap, var: &VarianceMap, id: u64) {
        let k = &self.camera;
        for f in &mut frame.points {
            f.point = k.pixel_index(&f.pixel).and_then(|idx| {
                let z = depth.values()[idx];
                (z > 0.0)
                    .then(|| backproject(f.pixel.x, f.pixel.y, z, var.values()[idx], k).ok())
                    .flatten()
            });
        }
        if self.config.features.lines() {
            for (n, f) in frame.lines.iter_mut().enumerate() {
                let seed = self.config.seed ^ (id << 20) ^ n as u64;
                f.line = fit_line_3d(&f.endpoints, depth, var, k, &self.config.ransac_params(seed)).ok();
            }
        }
        if self.config.features.planes() {
            frame.planes = self.segment(depth, var);
        }
    }
}

/// Samples depth along an image segment, rejects outliers with RANSAC and fits
/// a weighted 3D line to the inliers.
pub fn fit_line_3d(
    endpoints: &[nalgebra::Vector2<f64>; 2],
    depth: &DepthMap,
    var: &VarianceMap,
    k: &CameraIntrinsics,
    ransac: &RansacParams,
) -> Result<Line3> {
    let samples = sample_line_pixels(&endpoints[0], &endpoints[1], depth)?;
    let points: Vec<Point3> = samples
        .iter()
        .filter_map(|&(u, v, z)| backproject(u as f64, v as f64, z, var.get(u, v), k).ok())
        .collect();
    let inliers = ransac_line(&points, ransac)?;
    let chosen: Vec<Point3> = inliers.iter().map(|&i| points[i]).collect();
    fit_line_wls(&chosen)
}
