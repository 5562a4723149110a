//! TUM-format ingestion, trajectory metrics and the command-line driver.

pub mod cli;
pub mod dataset;
mod metrics;
mod trajectory;

use std::time::{Duration, Instant};

pub use dataset::{load_tum_sequence, Association, DatasetConfig, Frame, Sequence};
pub use metrics::{align_rigid, compute_ate, compute_rpe, RelativeError, RPE_PAIRING_TOLERANCE};
pub use trajectory::Trajectory;

use crate::depth_filter::{
    gm_convolve, temporal_fuse, variance_map, CosineMap, DepthMap, RangePointWindow, VarianceMap,
    WindowFrame,
};
use crate::pipeline::{DepthModel, FrameDiagnostics, Odometry, OdometryConfig};
use crate::pose::Pose;
use crate::Result;

/// Header of the metrics CSV.
pub const METRICS_HEADER: &str = "sequence,features,depth_model,rpe_trans_mm,rpe_rot_deg,ate_mm";

/// One metrics CSV row. A metric that cannot be computed for the run (too
/// short for a 1 s pair, or an estimate that never moved) is written as `nan`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub sequence: String,
    pub features: String,
    pub depth_model: String,
    pub rpe: Option<RelativeError>,
    pub ate_mm: Option<f64>,
}

impl MetricsRow {
    pub fn new(sequence: &str, config: &OdometryConfig, estimate: &Trajectory, truth: &Trajectory) -> Self {
        let tag = format!("{sequence} {} {}", config.features, config.depth_model);
        MetricsRow {
            sequence: sequence.to_string(),
            features: config.features.to_string(),
            depth_model: config.depth_model.to_string(),
            rpe: available(&tag, "RPE", compute_rpe(estimate, truth, 1.0)),
            ate_mm: available(&tag, "ATE", compute_ate(estimate, truth)),
        }
    }

    pub fn csv_row(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| format!("{v:.3}"));
        format!(
            "{},{},{},{},{},{}",
            self.sequence,
            self.features,
            self.depth_model,
            f(self.rpe.map(|r| r.trans_mm)),
            f(self.rpe.map(|r| r.rot_deg)),
            f(self.ate_mm)
        )
    }
}

fn available<T>(tag: &str, what: &str, r: Result<T>) -> Option<T> {
    r.map_err(|e| log::warn!("{tag}: {what} unavailable: {e}")).ok()
}

/// Output of running the odometry pipeline over a sequence.
#[derive(Debug, Clone)]
pub struct OdometryRun {
    pub trajectory: Trajectory,
    pub diagnostics: Vec<FrameDiagnostics>,
    pub elapsed: Duration,
}

impl OdometryRun {
    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from(FrameDiagnostics::CSV_HEADER);
        s.push('\n');
        for d in &self.diagnostics {
            s.push_str(&d.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn fallback_count(&self) -> usize {
        self.diagnostics.iter().filter(|d| d.fallback).count()
    }
}

/// Runs the pipeline over every frame of a sequence. When ground truth is
/// present the trajectory starts at the first ground-truth pose.
pub fn run_odometry(sequence: &Sequence, config: &OdometryConfig) -> Result<OdometryRun> {
    let start = Instant::now();
    let mut odo = Odometry::new(*config, sequence.camera)?;
    let mut diagnostics = Vec::with_capacity(sequence.len());
    for (i, frame) in sequence.frames().enumerate() {
        let frame = frame?;
        if i == 0 {
            if let Some(t) = frame.truth {
                odo.set_origin(t);
            }
        }
        if let Some(state) = odo.process_frame(frame.timestamp, frame.features, frame.depth)? {
            diagnostics.push(state.diagnostics);
        }
    }
    Ok(OdometryRun {
        trajectory: odo.trajectory().clone(),
        diagnostics,
        elapsed: start.elapsed(),
    })
}

/// RPE over 1 s and ATE of an estimate against ground truth.
pub fn evaluate(estimate: &Trajectory, truth: &Trajectory) -> Result<(RelativeError, f64)> {
    Ok((compute_rpe(estimate, truth, 1.0)?, compute_ate(estimate, truth)?))
}

/// Root mean square depth error over pixels valid in both maps.
pub fn depth_rmse(estimate: &DepthMap, truth: &DepthMap) -> Option<f64> {
    let (sum, n) = estimate
        .values()
        .iter()
        .zip(truth.values())
        .filter(|(e, t)| **e > 0.0 && **t > 0.0)
        .fold((0.0, 0usize), |(s, n), (e, t)| (s + (e - t) * (e - t), n + 1));
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// One frame of a depth-filter-only run.
#[derive(Debug, Clone)]
pub struct FilteredFrame {
    pub timestamp: f64,
    pub depth: DepthMap,
    pub var: VarianceMap,
    pub raw_rmse: Option<f64>,
    pub rmse: Option<f64>,
}

/// Runs the depth filter alone, registering the window with ground-truth
/// motion when available and assuming a static camera otherwise.
pub fn run_depth_filter(sequence: &Sequence, config: &OdometryConfig) -> Result<Vec<FilteredFrame>> {
    let camera = sequence.camera;
    let cosines = CosineMap::new(&camera);
    let mut window = RangePointWindow::new(config.window_len);
    let mut previous_truth: Option<nalgebra::Isometry3<f64>> = None;
    let mut out = Vec::with_capacity(sequence.len());
    for (id, frame) in sequence.frames().enumerate() {
        let frame = frame?;
        let sensor_var = variance_map(&frame.depth, &config.noise_model());
        let (cgm_depth, cgm_var) = gm_convolve(&frame.depth, &sensor_var)?;
        let (depth, var) = match config.depth_model {
            DepthModel::Sensor => (frame.depth.clone(), sensor_var),
            DepthModel::Cgm => (cgm_depth, cgm_var),
            DepthModel::Ogm => {
                let relative = match (previous_truth, frame.truth) {
                    (Some(prev), Some(cur)) => {
                        let m = cur.inverse() * prev;
                        Pose::new(m.rotation, m.translation.vector)
                    }
                    _ => Pose::identity(),
                };
                if id > 0 {
                    window.advance(&relative);
                    window.prune(config.prune_threshold);
                }
                let fused = temporal_fuse(&window, &cgm_depth, &cgm_var, &camera, &cosines, &config.fusion_params())?;
                window.append(WindowFrame::from_maps(id as u64, &cgm_depth, &cgm_var, &camera, &cosines));
                fused
            }
        };
        previous_truth = frame.truth;
        let (raw_rmse, rmse) = match &frame.truth_depth {
            Some(t) => (depth_rmse(&frame.depth, t), depth_rmse(&depth, t)),
            None => (None, None),
        };
        out.push(FilteredFrame {
            timestamp: frame.timestamp,
            depth,
            var,
            raw_rmse,
            rmse,
        });
    }
    Ok(out)
}
