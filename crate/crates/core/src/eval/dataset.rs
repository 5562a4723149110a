use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Isometry3;
use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::depth_filter::DepthMap;
use crate::geometry::CameraIntrinsics;
use crate::io::{read_depth_png, read_features, read_index, FeatureFile, DEFAULT_DEPTH_SCALE};
use crate::{Error, Result};

pub const DEPTH_INDEX: &str = "depth.txt";
pub const FEATURE_INDEX: &str = "features.txt";
pub const GROUNDTRUTH: &str = "groundtruth.txt";
/// Optional index of noiseless depth maps (synthetic sequences only).
pub const DEPTH_TRUTH_INDEX: &str = "depth_truth.txt";
pub const CALIBRATION: &str = "calibration.json";

/// Optional per-sequence calibration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub camera: CameraIntrinsics,
    #[serde(default = "default_scale")]
    pub depth_scale: f64,
}

fn default_scale() -> f64 {
    DEFAULT_DEPTH_SCALE
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    /// Largest timestamp difference accepted when associating streams, in s.
    pub max_offset: f64,
    /// Used when the sequence has no calibration file.
    pub depth_scale: f64,
    pub camera: CameraIntrinsics,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            max_offset: 0.02,
            depth_scale: DEFAULT_DEPTH_SCALE,
            camera: CameraIntrinsics::tum_default(),
        }
    }
}

/// One associated frame: feature timestamp, depth timestamp, ground truth timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    pub feature_time: f64,
    pub depth_time: f64,
    pub truth_time: Option<f64>,
    pub feature_path: PathBuf,
    pub depth_path: PathBuf,
    pub truth_depth_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub timestamp: f64,
    pub depth: DepthMap,
    pub features: FeatureFile,
    pub truth: Option<Isometry3<f64>>,
    pub truth_depth: Option<DepthMap>,
}

#[derive(Debug, Clone)]
pub struct Sequence {
    pub name: String,
    pub root: PathBuf,
    pub camera: CameraIntrinsics,
    pub depth_scale: f64,
    pub associations: Vec<Association>,
    /// Feature entries without a depth map within the offset.
    pub skipped: usize,
    pub groundtruth: Option<Trajectory>,
}

fn nearest(entries: &[(f64, String)], t: f64, max_offset: f64) -> Option<&(f64, String)> {
    entries
        .iter()
        .filter(|(s, _)| (s - t).abs() <= max_offset)
        .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
}

/// Opens a TUM-style sequence directory and associates its streams.
pub fn load_tum_sequence(dir: &Path, config: &DatasetConfig) -> Result<Sequence> {
    if !dir.is_dir() {
        return Err(Error::file(dir, "not a sequence directory"));
    }
    let calib_path = dir.join(CALIBRATION);
    let (camera, depth_scale) = if calib_path.exists() {
        let text = fs::read_to_string(&calib_path).map_err(|e| Error::file(&calib_path, e))?;
        let c: Calibration = serde_json::from_str(&text).map_err(|e| Error::file(&calib_path, e))?;
        c.camera.validate().map_err(|e| Error::file(&calib_path, e))?;
        (c.camera, c.depth_scale)
    } else {
        (config.camera, config.depth_scale)
    };
    let depth = read_index(&dir.join(DEPTH_INDEX))?;
    let features = read_index(&dir.join(FEATURE_INDEX))?;
    let gt_path = dir.join(GROUNDTRUTH);
    let groundtruth = if gt_path.exists() {
        Some(Trajectory::read_tum(&gt_path)?)
    } else {
        None
    };
    let truth_depth_path = dir.join(DEPTH_TRUTH_INDEX);
    let truth_depth = if truth_depth_path.exists() {
        read_index(&truth_depth_path)?
    } else {
        Vec::new()
    };
    let gt_times: Vec<(f64, String)> = groundtruth
        .iter()
        .flat_map(|g| g.entries().iter().map(|(t, _)| (*t, String::new())))
        .collect();

    let mut associations = Vec::new();
    let mut skipped = 0;
    for (ft, fpath) in &features {
        let Some((dt, dpath)) = nearest(&depth, *ft, config.max_offset) else {
            log::warn!("no depth map within {} s of feature frame {ft:.6}", config.max_offset);
            skipped += 1;
            continue;
        };
        associations.push(Association {
            feature_time: *ft,
            depth_time: *dt,
            truth_time: nearest(&gt_times, *ft, config.max_offset).map(|x| x.0),
            feature_path: dir.join(fpath),
            depth_path: dir.join(dpath),
            truth_depth_path: nearest(&truth_depth, *dt, config.max_offset).map(|x| dir.join(&x.1)),
        });
    }
    if skipped > 0 {
        log::warn!("{skipped} of {} frames skipped during association", features.len());
    }
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());
    Ok(Sequence {
        name,
        root: dir.to_path_buf(),
        camera,
        depth_scale,
        associations,
        skipped,
        groundtruth,
    })
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.associations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.associations.is_empty()
    }

    pub fn load_frame(&self, index: usize) -> Result<Frame> {
        let a = &self.associations[index];
        let depth = read_depth_png(&a.depth_path, self.depth_scale)?;
        if depth.dims() != (self.camera.width, self.camera.height) {
            return Err(Error::file(
                &a.depth_path,
                format!(
                    "depth is {}x{} but the camera is {}x{}",
                    depth.width(),
                    depth.height(),
                    self.camera.width,
                    self.camera.height
                ),
            ));
        }
        let features = read_features(&a.feature_path)?;
        let truth = a
            .truth_time
            .and_then(|t| self.groundtruth.as_ref().and_then(|g| g.interpolate(t)));
        let truth_depth = match &a.truth_depth_path {
            Some(p) => Some(read_depth_png(p, self.depth_scale)?),
            None => None,
        };
        Ok(Frame {
            timestamp: a.feature_time,
            depth,
            features,
            truth,
            truth_depth,
        })
    }

    /// Frames in time order, decoded lazily.
    pub fn frames(&self) -> impl Iterator<Item = Result<Frame>> + '_ {
        (0..self.len()).map(|i| self.load_frame(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{write_depth_png, write_features, write_index};

    fn fixture(dir: &Path, depth_times: &[f64], feature_times: &[f64]) {
        fs::create_dir_all(dir.join("depth")).unwrap();
        fs::create_dir_all(dir.join("features")).unwrap();
        let camera = CameraIntrinsics::new(10.0, 10.0, 1.5, 1.5, 4, 4).unwrap();
        fs::write(
            dir.join(CALIBRATION),
            serde_json::to_string(&Calibration { camera, depth_scale: 5.0 }).unwrap(),
        )
        .unwrap();
        let mut d = Vec::new();
        for (i, t) in depth_times.iter().enumerate() {
            let name = format!("depth/{i}.png");
            write_depth_png(&dir.join(&name), &DepthMap::from_vec(4, 4, vec![1000.0; 16]).unwrap(), 5.0).unwrap();
            d.push((*t, name));
        }
        let mut f = Vec::new();
        for (i, t) in feature_times.iter().enumerate() {
            let name = format!("features/{i}.json");
            write_features(&dir.join(&name), &FeatureFile::default()).unwrap();
            f.push((*t, name));
        }
        write_index(&dir.join(DEPTH_INDEX), "depth", &d).unwrap();
        write_index(&dir.join(FEATURE_INDEX), "features", &f).unwrap();
    }

    #[test]
    fn loads_aligned_sequence() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), &[0.0, 0.1, 0.2], &[0.0, 0.1, 0.2]);
        let seq = load_tum_sequence(dir.path(), &DatasetConfig::default()).unwrap();
        assert_eq!(seq.len(), 3);
        let frames: Vec<Frame> = seq.frames().collect::<Result<_>>().unwrap();
        assert_eq!(frames[1].timestamp, 0.1);
        assert_eq!(frames[2].depth.get(0, 0), 1000.0);
    }

    #[test]
    fn zero_offset_skips_misaligned_frames() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), &[0.0, 0.1, 0.2], &[0.005, 0.105, 0.205]);
        let config = DatasetConfig {
            max_offset: 0.0,
            ..Default::default()
        };
        let seq = load_tum_sequence(dir.path(), &config).unwrap();
        assert!(seq.is_empty());
        assert_eq!(seq.skipped, 3);
    }

    #[test]
    fn missing_depth_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), &[0.0], &[0.0]);
        fs::remove_file(dir.path().join("depth/0.png")).unwrap();
        let seq = load_tum_sequence(dir.path(), &DatasetConfig::default()).unwrap();
        let err = seq.load_frame(0).unwrap_err().to_string();
        assert!(err.contains("0.png"), "{err}");
    }
}
