use std::collections::VecDeque;

use nalgebra::Vector3;

use super::{depth_to_range, CosineMap, DepthMap, VarianceMap};
use crate::geometry::CameraIntrinsics;
use crate::pose::{translation_eigen_max, Pose};

pub const DEFAULT_WINDOW_LEN: usize = 10;

/// Range measurements of one past frame, stored in that frame's coordinates.
#[derive(Debug, Clone)]
pub struct WindowFrame {
    pub id: u64,
    /// Transform from this frame into the current frame, with covariance.
    pub pose: Pose,
    pub points: Vec<[f32; 3]>,
    /// Range variance per point in mm².
    pub range_var: Vec<f32>,
}

impl WindowFrame {
    /// Collects every valid pixel of a depth/variance pair as a range measurement.
    pub fn from_maps(
        id: u64,
        depth: &DepthMap,
        var: &VarianceMap,
        k: &CameraIntrinsics,
        cosines: &CosineMap,
    ) -> Self {
        let (w, h) = depth.dims();
        let mut points = Vec::new();
        let mut range_var = Vec::new();
        for v in 0..h {
            for u in 0..w {
                let z = depth.get(u, v);
                let vz = var.get(u, v);
                if !(z > 0.0 && vz > 0.0) {
                    continue;
                }
                let p = k.ray(u as f64, v as f64) * z;
                let (_, vr) = depth_to_range(z, vz, cosines.get(u, v));
                points.push([p.x as f32, p.y as f32, p.z as f32]);
                range_var.push(vr as f32);
            }
        }
        WindowFrame {
            id,
            pose: Pose::identity(),
            points,
            range_var,
        }
    }

    pub fn point(&self, i: usize) -> Vector3<f64> {
        let p = self.points[i];
        Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Sliding window of registered past measurements, oldest first.
#[derive(Debug, Clone)]
pub struct RangePointWindow {
    frames: VecDeque<WindowFrame>,
    max_len: usize,
}

impl RangePointWindow {
    pub fn new(max_len: usize) -> Self {
        RangePointWindow {
            frames: VecDeque::new(),
            max_len: max_len.max(1),
        }
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frames from oldest to newest.
    pub fn frames(&self) -> impl DoubleEndedIterator<Item = &WindowFrame> {
        self.frames.iter()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.frames.iter().map(|f| f.id).collect()
    }

    /// Re-expresses every stored frame in the next camera frame.
    ///
    /// `relative` maps points of the old current frame into the new one and
    /// carries the covariance of that step.
    pub fn advance(&mut self, relative: &Pose) {
        for frame in &mut self.frames {
            frame.pose = relative.compose(&frame.pose);
        }
    }

    /// Appends a frame captured in the current camera frame, evicting the
    /// oldest when the window is full.
    pub fn append(&mut self, mut frame: WindowFrame) {
        frame.pose = Pose::identity();
        self.frames.push_back(frame);
        while self.frames.len() > self.max_len {
            self.frames.pop_front();
        }
    }

    /// Drops frames whose translation uncertainty exceeds `threshold` (mm²).
    pub fn prune(&mut self, threshold: f64) -> Vec<u64> {
        let mut dropped = Vec::new();
        self.frames.retain(|f| {
            let keep = translation_eigen_max(&f.pose.cov) <= threshold;
            if !keep {
                dropped.push(f.id);
            }
            keep
        });
        dropped
    }
}

/// Advances the window by `relative` and appends `frame` at the new current pose.
pub fn window_push(window: &mut RangePointWindow, frame: WindowFrame, relative: &Pose) {
    window.advance(relative);
    window.append(frame);
}

/// Removes frames with an unreliable registration; returns the dropped ids.
pub fn window_prune(window: &mut RangePointWindow, threshold: f64) -> Vec<u64> {
    window.prune(threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix6, UnitQuaternion};

    fn frame(id: u64, pts: &[[f32; 3]]) -> WindowFrame {
        WindowFrame {
            id,
            pose: Pose::identity(),
            points: pts.to_vec(),
            range_var: vec![1.0; pts.len()],
        }
    }

    #[test]
    fn push_to_empty() {
        let mut w = RangePointWindow::new(DEFAULT_WINDOW_LEN);
        window_push(&mut w, frame(0, &[[0.0, 0.0, 1000.0]]), &Pose::identity());
        assert_eq!(w.len(), 1);
        let f = w.frames().next().unwrap();
        assert_eq!(f.pose.translation, Vector3::zeros());
        assert_eq!(f.pose.rotation, UnitQuaternion::identity());
    }

    #[test]
    fn oldest_evicted_beyond_max() {
        let mut w = RangePointWindow::new(DEFAULT_WINDOW_LEN);
        for id in 0..15 {
            window_push(&mut w, frame(id, &[]), &Pose::identity());
            assert!(w.len() <= 10);
        }
        assert_eq!(w.len(), 10);
        assert_eq!(w.ids(), (5..15).collect::<Vec<_>>());
    }

    #[test]
    fn camera_translation_shifts_points_back() {
        let mut w = RangePointWindow::new(4);
        window_push(&mut w, frame(0, &[[10.0, -20.0, 1500.0]]), &Pose::identity());
        // Camera moves by +c; old points appear shifted by −c.
        let c = Vector3::new(30.0, 5.0, -12.0);
        let step = Pose::new(UnitQuaternion::identity(), -c);
        window_push(&mut w, frame(1, &[]), &step);
        let old = w.frames().next().unwrap();
        let seen = old.pose.transform_point(&old.point(0));
        assert!((seen - (Vector3::new(10.0, -20.0, 1500.0) - c)).norm() < 1e-4);
    }

    #[test]
    fn prune_zero_covariance_keeps_all() {
        let mut w = RangePointWindow::new(10);
        for id in 0..5 {
            window_push(&mut w, frame(id, &[]), &Pose::identity());
        }
        assert!(window_prune(&mut w, 25.0).is_empty());
        assert_eq!(w.len(), 5);
    }

    #[test]
    fn prune_drops_large_translation_uncertainty() {
        let mut w = RangePointWindow::new(10);
        for id in 0..3 {
            w.append(frame(id, &[]));
        }
        let threshold = 25.0;
        w.frames[1].pose.cov[(0, 0)] = threshold + 1.0;
        assert_eq!(window_prune(&mut w, threshold), vec![1]);
        assert_eq!(w.ids(), vec![0, 2]);
    }

    #[test]
    fn growth_under_propagation_prunes_oldest() {
        // Oracle: with identity steps the oldest frame's covariance after n
        // advances is n·Q exactly, so λmax = n·q and it exceeds T at n = ⌊T/q⌋ + 1.
        let q: f64 = 1.0;
        let threshold = 25.0;
        let expected_steps = (threshold / q).floor() as usize + 1;

        let mut cov = Matrix6::zeros();
        for i in 0..3 {
            cov[(i, i)] = q;
        }
        for i in 3..6 {
            cov[(i, i)] = 1e-8;
        }
        let step = Pose::identity().with_cov(cov);
        let mut w = RangePointWindow::new(100);
        w.append(frame(0, &[]));
        let mut steps = 0;
        loop {
            steps += 1;
            w.advance(&step);
            w.append(frame(steps as u64, &[]));
            if !window_prune(&mut w, threshold).is_empty() {
                break;
            }
            assert!(steps < 1000);
        }
        assert_eq!(steps, expected_steps);
        assert_eq!(w.ids()[0], 1);
    }
}
