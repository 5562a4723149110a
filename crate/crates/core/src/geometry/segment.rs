//! Normal-based region growing over an organized point cloud.
//!
//! A lightweight stand-in for a dedicated real-time plane extractor; good
//! enough for piecewise-planar indoor scenes.

use std::collections::VecDeque;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::{backproject, fit_plane_wls, CameraIntrinsics, PlaneParams, Point3};
use crate::depth_filter::{DepthMap, VarianceMap};

/// Per-pixel 3D points laid out on the image grid.
#[derive(Debug, Clone)]
pub struct OrganizedCloud {
    pub width: usize,
    pub height: usize,
    pub points: Vec<Option<Point3>>,
}

impl OrganizedCloud {
    pub fn from_maps(depth: &DepthMap, var: &VarianceMap, k: &CameraIntrinsics) -> Self {
        let (w, h) = (depth.width(), depth.height());
        let mut points = Vec::with_capacity(w * h);
        for v in 0..h {
            for u in 0..w {
                let z = depth.get(u, v);
                let pt = if z > 0.0 {
                    backproject(u as f64, v as f64, z, var.get(u, v).max(1e-12), k).ok()
                } else {
                    None
                };
                points.push(pt);
            }
        }
        OrganizedCloud {
            width: w,
            height: h,
            points,
        }
    }

    pub fn get(&self, u: usize, v: usize) -> Option<&Point3> {
        self.points[v * self.width + u].as_ref()
    }
}

/// Bit mask over image pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize) -> Self {
        PixelMask {
            width,
            height,
            words: vec![0; (width * height).div_ceil(64)],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn set(&mut self, index: usize) {
        self.words[index / 64] |= 1 << (index % 64);
    }

    pub fn get(&self, index: usize) -> bool {
        self.words[index / 64] >> (index % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Population of the intersection with another mask of the same size.
    pub fn overlap(&self, other: &PixelMask) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct PlaneSegment {
    pub mask: PixelMask,
    pub inliers: Vec<Point3>,
    pub plane: PlaneParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentParams {
    /// Point-to-plane distance for growing, in mm.
    pub distance_threshold: f64,
    /// Normal angle for growing, in degrees.
    pub angle_threshold_deg: f64,
    pub min_inliers: usize,
    /// Half-size of the normal estimation window (2 gives 5x5).
    pub normal_radius: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            distance_threshold: 20.0,
            angle_threshold_deg: 8.0,
            min_inliers: 500,
            normal_radius: 2,
        }
    }
}

struct LocalNormal {
    normal: Vector3<f64>,
    curvature: f64,
}

fn local_normals(cloud: &OrganizedCloud, radius: usize) -> Vec<Option<LocalNormal>> {
    let (w, h) = (cloud.width, cloud.height);
    let mut out = Vec::with_capacity(w * h);
    let min_support = (2 * radius + 1) * (2 * radius + 1) / 2;
    for v in 0..h {
        for u in 0..w {
            let Some(center) = cloud.get(u, v) else {
                out.push(None);
                continue;
            };
            let mut n = 0usize;
            let mut sum = Vector3::zeros();
            let mut outer = Matrix3::zeros();
            for y in v.saturating_sub(radius)..(v + radius + 1).min(h) {
                for x in u.saturating_sub(radius)..(u + radius + 1).min(w) {
                    if let Some(p) = cloud.get(x, y) {
                        let q = p.p - center.p;
                        sum += q;
                        outer += q * q.transpose();
                        n += 1;
                    }
                }
            }
            if n < min_support {
                out.push(None);
                continue;
            }
            let mean = sum / n as f64;
            let cov = outer / n as f64 - mean * mean.transpose();
            let eig = SymmetricEigen::new(cov);
            let (imin, _) = eig.eigenvalues.argmin();
            let total = eig.eigenvalues.sum();
            let mut normal: Vector3<f64> = eig.eigenvectors.column(imin).into_owned();
            if normal.dot(&center.p) > 0.0 {
                normal = -normal;
            }
            let curvature = if total > 0.0 {
                eig.eigenvalues[imin].max(0.0) / total
            } else {
                1.0
            };
            out.push(Some(LocalNormal { normal, curvature }));
        }
    }
    out
}

/// Running least-squares plane of a growing region.
struct RegionPlane {
    n: f64,
    sum: Vector3<f64>,
    outer: Matrix3<f64>,
    normal: Vector3<f64>,
    centroid: Vector3<f64>,
    refit_at: f64,
}

impl RegionPlane {
    fn new(seed: &Vector3<f64>, normal: Vector3<f64>) -> Self {
        RegionPlane {
            n: 1.0,
            sum: *seed,
            outer: seed * seed.transpose(),
            normal,
            centroid: *seed,
            refit_at: 32.0,
        }
    }

    fn add(&mut self, p: &Vector3<f64>) {
        self.n += 1.0;
        self.sum += p;
        self.outer += p * p.transpose();
        if self.n >= self.refit_at {
            self.refit_at *= 2.0;
            let mean = self.sum / self.n;
            let cov = self.outer / self.n - mean * mean.transpose();
            let eig = SymmetricEigen::new(cov);
            let (imin, _) = eig.eigenvalues.argmin();
            let mut normal: Vector3<f64> = eig.eigenvectors.column(imin).into_owned();
            if normal.dot(&self.normal) < 0.0 {
                normal = -normal;
            }
            self.normal = normal;
            self.centroid = mean;
        }
    }

    fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(&(p - self.centroid)).abs()
    }
}

/// Segments an organized cloud into planar regions and fits each with
/// [`fit_plane_wls`].
pub fn segment_planes(cloud: &OrganizedCloud, params: &SegmentParams) -> Vec<PlaneSegment> {
    let (w, h) = (cloud.width, cloud.height);
    let normals = local_normals(cloud, params.normal_radius);
    let mut seeds: Vec<usize> = (0..w * h).filter(|&i| normals[i].is_some()).collect();
    seeds.sort_by(|&a, &b| {
        let ca = normals[a].as_ref().map_or(1.0, |n| n.curvature);
        let cb = normals[b].as_ref().map_or(1.0, |n| n.curvature);
        ca.total_cmp(&cb).then(a.cmp(&b))
    });
    let cos_thresh = params.angle_threshold_deg.to_radians().cos();
    let mut visited = vec![false; w * h];
    let mut segments = Vec::new();
    let mut queue = VecDeque::new();

    for &seed in &seeds {
        if visited[seed] {
            continue;
        }
        let seed_pt = cloud.points[seed].as_ref().map(|p| p.p).unwrap_or_default();
        let seed_normal = normals[seed].as_ref().map(|n| n.normal).unwrap_or_default();
        let mut region = RegionPlane::new(&seed_pt, seed_normal);
        let mut members = vec![seed];
        visited[seed] = true;
        queue.clear();
        queue.push_back(seed);
        while let Some(idx) = queue.pop_front() {
            let (u, v) = (idx % w, idx / w);
            let mut neighbours = [None; 4];
            if u > 0 {
                neighbours[0] = Some(idx - 1);
            }
            if u + 1 < w {
                neighbours[1] = Some(idx + 1);
            }
            if v > 0 {
                neighbours[2] = Some(idx - w);
            }
            if v + 1 < h {
                neighbours[3] = Some(idx + w);
            }
            for nb in neighbours.into_iter().flatten() {
                if visited[nb] {
                    continue;
                }
                let (Some(p), Some(n)) = (cloud.points[nb].as_ref(), normals[nb].as_ref()) else {
                    continue;
                };
                if n.normal.dot(&region.normal).abs() < cos_thresh {
                    continue;
                }
                if region.distance(&p.p) > params.distance_threshold {
                    continue;
                }
                visited[nb] = true;
                region.add(&p.p);
                members.push(nb);
                queue.push_back(nb);
            }
        }
        if members.len() < params.min_inliers {
            continue;
        }
        members.sort_unstable();
        let inliers: Vec<Point3> = members
            .iter()
            .filter_map(|&i| cloud.points[i])
            .collect();
        let Ok(plane) = fit_plane_wls(&inliers) else {
            continue;
        };
        let mut mask = PixelMask::new(w, h);
        for &i in &members {
            mask.set(i);
        }
        segments.push(PlaneSegment {
            mask,
            inliers,
            plane,
        });
    }
    segments
}
