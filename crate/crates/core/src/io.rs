//! File formats: 16-bit depth PNGs, variance rasters, feature files, plane
//! label images and timestamp index files.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{ImageBuffer, Luma};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::depth_filter::{DepthMap, VarianceMap};
use crate::geometry::PlaneSegment;
use crate::matching::{FeatureFrame, LineFeature, PointFeature};
use crate::{Error, Result};

/// Default PNG depth scale: stored value = depth in mm × 5.
pub const DEFAULT_DEPTH_SCALE: f64 = 5.0;

pub fn read_depth_png(path: &Path, scale: f64) -> Result<DepthMap> {
    let img = image::open(path).map_err(|e| Error::file(path, e))?;
    let img = match img {
        image::DynamicImage::ImageLuma16(b) => b,
        other => {
            return Err(Error::file(
                path,
                format!("expected 16-bit grayscale depth, found {:?}", other.color()),
            ))
        }
    };
    let (w, h) = img.dimensions();
    let z = img.pixels().map(|p| p.0[0] as f64 / scale).collect();
    DepthMap::from_vec(w as usize, h as usize, z)
}

pub fn write_depth_png(path: &Path, depth: &DepthMap, scale: f64) -> Result<()> {
    let (w, h) = depth.dims();
    let buf: Vec<u16> = depth
        .values()
        .iter()
        .map(|&z| (z * scale).round().clamp(0.0, u16::MAX as f64) as u16)
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, buf).expect("buffer matches dimensions");
    img.save(path).map_err(|e| Error::file(path, e))
}

/// Writes `width`, `height` as little-endian u32 followed by row-major f32 values.
pub fn write_variance_raster(path: &Path, var: &VarianceMap) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + 4 * var.values().len());
    bytes.extend_from_slice(&(var.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(var.height() as u32).to_le_bytes());
    for &v in var.values() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

pub fn read_variance_raster(path: &Path) -> Result<VarianceMap> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    if bytes.len() < 8 {
        return Err(Error::file(path, "truncated variance raster header"));
    }
    let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() != 8 + 4 * w * h {
        return Err(Error::file(path, "variance raster size does not match header"));
    }
    let var = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    VarianceMap::from_vec(w, h, var).map_err(|e| Error::file(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub u: f64,
    pub v: f64,
    pub desc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub u1: f64,
    pub v1: f64,
    pub u2: f64,
    pub v2: f64,
    pub desc: Vec<f64>,
}

/// Per-frame feature file: 2D detections with descriptors from any detector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureFile {
    #[serde(default)]
    pub points: Vec<PointRecord>,
    #[serde(default)]
    pub lines: Vec<LineRecord>,
}

impl FeatureFile {
    /// Converts to a frame without 3D geometry.
    pub fn into_frame(self) -> FeatureFrame {
        FeatureFrame {
            points: self
                .points
                .into_iter()
                .map(|p| PointFeature {
                    pixel: Vector2::new(p.u, p.v),
                    descriptor: p.desc,
                    point: None,
                })
                .collect(),
            lines: self
                .lines
                .into_iter()
                .map(|l| LineFeature {
                    endpoints: [Vector2::new(l.u1, l.v1), Vector2::new(l.u2, l.v2)],
                    descriptor: l.desc,
                    line: None,
                })
                .collect(),
            planes: Vec::new(),
        }
    }

    fn check(&self, path: &Path) -> Result<()> {
        let uniform = |mut lens: Box<dyn Iterator<Item = usize> + '_>| {
            let first = lens.next();
            first.is_none_or(|f| lens.all(|l| l == f))
        };
        if !uniform(Box::new(self.points.iter().map(|p| p.desc.len())))
            || !uniform(Box::new(self.lines.iter().map(|l| l.desc.len())))
        {
            return Err(Error::file(path, "descriptor lengths differ within a feature type"));
        }
        Ok(())
    }
}

pub fn read_features(path: &Path) -> Result<FeatureFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let file: FeatureFile = serde_json::from_str(&text).map_err(|e| Error::file(path, e))?;
    file.check(path)?;
    Ok(file)
}

pub fn write_features(path: &Path, features: &FeatureFile) -> Result<()> {
    let text = serde_json::to_string(features).map_err(|e| Error::file(path, e))?;
    fs::write(path, text).map_err(|e| Error::file(path, e))
}

/// 8-bit label image: 0 for unassigned pixels, `i + 1` for segment `i`.
pub fn write_label_png(path: &Path, segments: &[PlaneSegment], width: usize, height: usize) -> Result<()> {
    let mut buf = vec![0u8; width * height];
    for (i, s) in segments.iter().enumerate() {
        let label = (i + 1).min(255) as u8;
        for (idx, px) in buf.iter_mut().enumerate() {
            if s.mask.get(idx) {
                *px = label;
            }
        }
    }
    let img: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(width as u32, height as u32, buf).expect("buffer matches dimensions");
    img.save(path).map_err(|e| Error::file(path, e))
}

/// Reads a TUM-style index of `timestamp path` lines, skipping `#` comments.
pub fn read_index(path: &Path) -> Result<Vec<(f64, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(ts), Some(file)) = (parts.next(), parts.next()) else {
            return Err(Error::file(path, format!("line {}: expected `timestamp path`", n + 1)));
        };
        let ts: f64 = ts
            .parse()
            .map_err(|_| Error::file(path, format!("line {}: bad timestamp `{ts}`", n + 1)))?;
        out.push((ts, file.to_string()));
    }
    Ok(out)
}

pub fn write_index(path: &Path, header: &str, entries: &[(f64, String)]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut text = format!("# {header}\n# timestamp filename\n");
    for (ts, name) in entries {
        text.push_str(&format!("{ts:.6} {name}\n"));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::file(path, e))
}
