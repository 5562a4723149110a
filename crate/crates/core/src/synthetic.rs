//! Ground-truth scenes rendered to depth maps, feature files and trajectories.
//!
//! World coordinates are in mm; trajectory poses are camera-to-world.

use std::fs;
use std::path::Path;

use nalgebra::{Isometry3, Point3 as NPoint3, Quaternion, Translation3, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::depth_filter::{DepthMap, SensorNoiseModel};
use crate::eval::dataset::{
    Calibration, CALIBRATION, DEPTH_INDEX, DEPTH_TRUTH_INDEX, FEATURE_INDEX, GROUNDTRUTH,
};
use crate::eval::Trajectory;
use crate::geometry::CameraIntrinsics;
use crate::io::{write_depth_png, write_features, write_index, FeatureFile, LineRecord, PointRecord, DEFAULT_DEPTH_SCALE};
use crate::{Error, Result};

/// Planar convex polygon, vertices in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenePlane {
    pub vertices: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneLine {
    pub start: [f64; 3],
    pub end: [f64; 3],
    /// Generated from the scene seed when empty.
    #[serde(default)]
    pub descriptor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Landmark {
    pub position: [f64; 3],
    /// Generated from the scene seed when empty.
    #[serde(default)]
    pub descriptor: Vec<f64>,
}

/// Camera-to-world pose; translation in mm, rotation as `[x, y, z, w]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthPose {
    pub timestamp: f64,
    pub translation: [f64; 3],
    pub rotation: [f64; 4],
}

impl TruthPose {
    pub fn from_isometry(timestamp: f64, p: &Isometry3<f64>) -> Self {
        let q = p.rotation.quaternion();
        TruthPose {
            timestamp,
            translation: p.translation.vector.into(),
            rotation: [q.i, q.j, q.k, q.w],
        }
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        let [x, y, z, w] = self.rotation;
        Isometry3::from_parts(
            Translation3::from(Vector3::from(self.translation)),
            UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub depth_noise: bool,
    pub quantization: bool,
    /// Fraction of depth-discontinuity pixels turned into flying pixels.
    pub outlier_fraction: f64,
    /// Uniform ±0.5 px jitter on feature positions.
    pub pixel_jitter: bool,
    /// Standard deviation of per-frame descriptor jitter.
    pub descriptor_jitter: f64,
    /// Focal length times baseline of the simulated disparity sensor, in px·mm.
    pub focal_baseline: f64,
    /// Disparity quantization step in px.
    pub disparity_step: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            depth_noise: true,
            quantization: true,
            outlier_fraction: 0.005,
            pixel_jitter: true,
            descriptor_jitter: 0.02,
            focal_baseline: 580.0 * 75.0,
            disparity_step: 0.125,
        }
    }
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        NoiseSpec {
            depth_noise: false,
            quantization: false,
            outlier_fraction: 0.0,
            pixel_jitter: false,
            descriptor_jitter: 0.0,
            ..Default::default()
        }
    }
}

/// A complete synthetic sequence description, serialisable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub camera: CameraIntrinsics,
    #[serde(default = "default_scale")]
    pub depth_scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_descriptor_dim")]
    pub descriptor_dim: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub planes: Vec<ScenePlane>,
    #[serde(default)]
    pub lines: Vec<SceneLine>,
    #[serde(default)]
    pub landmarks: Vec<Landmark>,
    pub trajectory: Vec<TruthPose>,
}

fn default_scale() -> f64 {
    DEFAULT_DEPTH_SCALE
}

fn default_descriptor_dim() -> usize {
    32
}

/// Closest distance at which geometry is rendered, in mm.
const NEAR_PLANE: f64 = 100.0;
/// Shortest visible image segment, in px.
const MIN_SEGMENT_PX: f64 = 20.0;
/// Depth jump marking a discontinuity for flying pixels, in mm.
const DISCONTINUITY: f64 = 100.0;

struct Polygon {
    normal: Vector3<f64>,
    offset: f64,
    vertices: Vec<Vector3<f64>>,
}

impl Polygon {
    fn new(p: &ScenePlane) -> Result<Self> {
        let vertices: Vec<Vector3<f64>> = p.vertices.iter().map(|v| Vector3::from(*v)).collect();
        if vertices.len() < 3 {
            return Err(Error::InputDomain("scene polygons need at least 3 vertices".into()));
        }
        // Newell's method.
        let mut n = Vector3::zeros();
        for i in 0..vertices.len() {
            let (a, b) = (vertices[i], vertices[(i + 1) % vertices.len()]);
            n += Vector3::new(
                (a.y - b.y) * (a.z + b.z),
                (a.z - b.z) * (a.x + b.x),
                (a.x - b.x) * (a.y + b.y),
            );
        }
        let len = n.norm();
        if !(len > 0.0) {
            return Err(Error::InputDomain("degenerate scene polygon".into()));
        }
        let normal = n / len;
        let offset = normal.dot(&vertices[0]);
        Ok(Polygon {
            normal,
            offset,
            vertices,
        })
    }

    fn contains(&self, x: &Vector3<f64>) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            self.normal.dot(&(b - a).cross(&(x - a))) >= -1e-9
        })
    }

    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let den = self.normal.dot(dir);
        if den.abs() < 1e-12 {
            return None;
        }
        let t = (self.offset - self.normal.dot(origin)) / den;
        (t > 0.0 && self.contains(&(origin + dir * t))).then_some(t)
    }
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: SceneSpec = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text).map_err(|e| Error::file(path, e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene spec serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        for p in &self.planes {
            Polygon::new(p)?;
        }
        if self.trajectory.windows(2).any(|w| !(w[1].timestamp > w[0].timestamp)) {
            return Err(Error::InputDomain("trajectory timestamps must increase".into()));
        }
        for pose in &self.trajectory {
            let inv = pose.isometry().inverse();
            for l in &self.landmarks {
                if (inv * NPoint3::from(l.position)).z <= 0.0 {
                    return Err(Error::InputDomain(format!(
                        "landmark {:?} is behind the camera at t={}",
                        l.position, pose.timestamp
                    )));
                }
            }
        }
        Ok(())
    }

    /// Fills empty descriptors with seeded random vectors of unit expected norm.
    pub fn resolve_descriptors(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0xD35C);
        let dim = self.descriptor_dim;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dim)
                .map(|_| StandardNormal.sample(rng))
                .map(|x: f64| x / (dim as f64).sqrt())
                .collect()
        };
        for l in &mut self.landmarks {
            let d = draw(&mut rng);
            if l.descriptor.is_empty() {
                l.descriptor = d;
            }
        }
        for l in &mut self.lines {
            let d = draw(&mut rng);
            if l.descriptor.is_empty() {
                l.descriptor = d;
            }
        }
    }

    pub fn truth_trajectory(&self) -> Result<Trajectory> {
        Trajectory::new(self.trajectory.iter().map(|p| (p.timestamp, p.isometry())).collect())
    }

    /// Ray-cast depth of the nearest surface per pixel; 0 where nothing is hit.
    pub fn render_truth(&self, pose: &Isometry3<f64>) -> Result<DepthMap> {
        let polys = self.planes.iter().map(Polygon::new).collect::<Result<Vec<_>>>()?;
        let k = &self.camera;
        let origin = pose.translation.vector;
        let mut depth = DepthMap::new(k.width, k.height);
        for v in 0..k.height {
            for u in 0..k.width {
                let dir = pose.rotation * k.ray(u as f64, v as f64);
                let hit = polys
                    .iter()
                    .filter_map(|p| p.intersect(&origin, &dir))
                    .fold(f64::INFINITY, f64::min);
                if hit.is_finite() && hit >= NEAR_PLANE {
                    depth.set(u, v, hit);
                }
            }
        }
        Ok(depth)
    }
}

/// Renders `(noisy, ground truth)` depth for a camera-to-world pose.
///
/// Noise is Gaussian with the quadratic standard deviation of the sensor
/// model, then disparity is quantized, then flying pixels are injected at
/// depth discontinuities.
pub fn render_depth(
    scene: &SceneSpec,
    pose: &Isometry3<f64>,
    noise: &NoiseSpec,
    rng: &mut impl Rng,
) -> Result<(DepthMap, DepthMap)> {
    let truth = scene.render_truth(pose)?;
    let mut noisy = truth.clone();
    let model = SensorNoiseModel::default();
    for z in noisy.values_mut() {
        if *z <= 0.0 {
            continue;
        }
        if noise.depth_noise {
            let n: f64 = StandardNormal.sample(rng);
            *z += model.std_dev(*z) * n;
        }
        if noise.quantization {
            let step = noise.disparity_step;
            let disparity = ((noise.focal_baseline / *z) / step).round() * step;
            *z = if disparity > 0.0 { noise.focal_baseline / disparity } else { 0.0 };
        }
        if !(*z > 0.0 && z.is_finite()) {
            *z = 0.0;
        }
    }
    if noise.outlier_fraction > 0.0 {
        let (w, h) = truth.dims();
        let t = truth.values();
        for v in 0..h {
            for u in 0..w {
                let i = v * w + u;
                if t[i] <= 0.0 {
                    continue;
                }
                let neighbours = [
                    (u > 0).then(|| i - 1),
                    (u + 1 < w).then(|| i + 1),
                    (v > 0).then(|| i - w),
                    (v + 1 < h).then(|| i + w),
                ];
                let far = neighbours
                    .into_iter()
                    .flatten()
                    .map(|j| t[j])
                    .find(|&z| z > 0.0 && (z - t[i]).abs() > DISCONTINUITY);
                if let Some(other) = far {
                    if rng.random::<f64>() < noise.outlier_fraction {
                        let s: f64 = rng.random();
                        noisy.values_mut()[i] = t[i] + s * (other - t[i]);
                    }
                }
            }
        }
    }
    Ok((noisy, truth))
}

fn jittered(desc: &[f64], sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    if sigma <= 0.0 {
        return desc.to_vec();
    }
    let n = Normal::new(0.0, sigma).expect("positive jitter");
    desc.iter().map(|d| d + n.sample(rng)).collect()
}

fn pixel_jitter(noise: &NoiseSpec, rng: &mut impl Rng) -> Vector2<f64> {
    if noise.pixel_jitter {
        Vector2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
    } else {
        Vector2::zeros()
    }
}

/// Clips a segment to `[lo, hi]` per axis (Liang-Barsky).
fn clip_segment(a: Vector2<f64>, b: Vector2<f64>, lo: Vector2<f64>, hi: Vector2<f64>) -> Option<(Vector2<f64>, Vector2<f64>)> {
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for axis in 0..2 {
        for (p, q) in [(-d[axis], a[axis] - lo[axis]), (d[axis], hi[axis] - a[axis])] {
            if p == 0.0 {
                if q < 0.0 {
                    return None;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
    }
    (t0 <= t1).then(|| (a + d * t0, a + d * t1))
}

/// Projects visible landmarks and line segments into a feature file.
///
/// `truth` is the noiseless depth of the same view, used for occlusion.
pub fn render_features(
    scene: &SceneSpec,
    pose: &Isometry3<f64>,
    truth: &DepthMap,
    noise: &NoiseSpec,
    rng: &mut impl Rng,
) -> FeatureFile {
    let k = &scene.camera;
    let inv = pose.inverse();
    let mut out = FeatureFile::default();
    for l in &scene.landmarks {
        let pc = (inv * NPoint3::from(l.position)).coords;
        if pc.z < NEAR_PLANE {
            continue;
        }
        let uv = k.project(&pc);
        let Some(idx) = k.pixel_index(&uv) else {
            continue;
        };
        let surface = truth.values()[idx];
        if surface > 0.0 && surface < pc.z * (1.0 - 0.01) {
            continue;
        }
        let uv = uv + pixel_jitter(noise, rng);
        out.points.push(PointRecord {
            u: uv.x,
            v: uv.y,
            desc: jittered(&l.descriptor, noise.descriptor_jitter, rng),
        });
    }
    let lo = Vector2::new(1.0, 1.0);
    let hi = Vector2::new(k.width as f64 - 2.0, k.height as f64 - 2.0);
    for l in &scene.lines {
        let mut a = (inv * NPoint3::from(l.start)).coords;
        let mut b = (inv * NPoint3::from(l.end)).coords;
        if a.z < NEAR_PLANE && b.z < NEAR_PLANE {
            continue;
        }
        if a.z < NEAR_PLANE {
            a = b + (a - b) * ((b.z - NEAR_PLANE) / (b.z - a.z));
        } else if b.z < NEAR_PLANE {
            b = a + (b - a) * ((a.z - NEAR_PLANE) / (a.z - b.z));
        }
        let Some((p, q)) = clip_segment(k.project(&a), k.project(&b), lo, hi) else {
            continue;
        };
        if (q - p).norm() < MIN_SEGMENT_PX {
            continue;
        }
        let (p, q) = (p + pixel_jitter(noise, rng), q + pixel_jitter(noise, rng));
        out.lines.push(LineRecord {
            u1: p.x.clamp(lo.x, hi.x),
            v1: p.y.clamp(lo.y, hi.y),
            u2: q.x.clamp(lo.x, hi.x),
            v2: q.y.clamp(lo.y, hi.y),
            desc: jittered(&l.descriptor, noise.descriptor_jitter, rng),
        });
    }
    out
}

/// Seed of the random stream used for frame `index`.
pub fn frame_seed(scene_seed: u64, index: usize) -> u64 {
    scene_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_add(1)
}

/// Writes the scene as a sequence directory readable by
/// [`load_tum_sequence`](crate::eval::load_tum_sequence).
pub fn write_sequence(scene: &SceneSpec, dir: &Path) -> Result<()> {
    let mut scene = scene.clone();
    scene.validate()?;
    scene.resolve_descriptors();
    fs::create_dir_all(dir.join("depth")).map_err(|e| Error::file(dir, e))?;
    fs::create_dir_all(dir.join("features")).map_err(|e| Error::file(dir, e))?;
    fs::create_dir_all(dir.join("depth_truth")).map_err(|e| Error::file(dir, e))?;
    let mut depth_index = Vec::new();
    let mut truth_index = Vec::new();
    let mut feature_index = Vec::new();
    for (i, tp) in scene.trajectory.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(scene.seed, i));
        let pose = tp.isometry();
        let (depth, truth) = render_depth(&scene, &pose, &scene.noise, &mut rng)?;
        let features = render_features(&scene, &pose, &truth, &scene.noise, &mut rng);
        let dname = format!("depth/{i:05}.png");
        let fname = format!("features/{i:05}.json");
        let tname = format!("depth_truth/{i:05}.png");
        write_depth_png(&dir.join(&dname), &depth, scene.depth_scale)?;
        write_depth_png(&dir.join(&tname), &truth, scene.depth_scale)?;
        truth_index.push((tp.timestamp, tname));
        write_features(&dir.join(&fname), &features)?;
        depth_index.push((tp.timestamp, dname));
        feature_index.push((tp.timestamp, fname));
    }
    write_index(&dir.join(DEPTH_INDEX), "depth maps", &depth_index)?;
    write_index(&dir.join(FEATURE_INDEX), "feature files", &feature_index)?;
    write_index(&dir.join(DEPTH_TRUTH_INDEX), "noiseless depth maps", &truth_index)?;
    scene.truth_trajectory()?.write_tum(&dir.join(GROUNDTRUTH))?;
    let calib = Calibration {
        camera: scene.camera,
        depth_scale: scene.depth_scale,
    };
    let path = dir.join(CALIBRATION);
    fs::write(&path, serde_json::to_string_pretty(&calib).expect("calibration serialises"))
        .map_err(|e| Error::file(&path, e))
}

/// Room of four walls and a floor seen by a camera moving on a horizontal
/// circle, with point landmarks and line segments on the visible surfaces.
///
/// The camera frame convention is x right, y down, z forward; the floor lies
/// 0.5 m below the camera path.
pub fn demo_room(seed: u64) -> SceneSpec {
    const HALF_WIDTH: f64 = 800.0;
    const HALF_DEPTH: f64 = 1750.0;
    const FLOOR: f64 = 500.0;
    const TOP: f64 = -1500.0;
    const FRAMES: usize = 100;
    const RATE: f64 = 30.0;
    const RADIUS: f64 = 250.0;

    let (w, d) = (HALF_WIDTH, HALF_DEPTH);
    let wall = |a: [f64; 2], b: [f64; 2]| ScenePlane {
        vertices: vec![
            [a[0], TOP, a[1]],
            [b[0], TOP, b[1]],
            [b[0], FLOOR, b[1]],
            [a[0], FLOOR, a[1]],
        ],
    };
    let planes = vec![
        wall([-w, d], [w, d]),
        wall([w, d], [w, -d]),
        wall([w, -d], [-w, -d]),
        wall([-w, -d], [-w, d]),
        ScenePlane {
            vertices: vec![[-w, FLOOR, -d], [w, FLOOR, -d], [w, FLOOR, d], [-w, FLOOR, d]],
        },
    ];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut landmarks = Vec::new();
    let mut push = |p: [f64; 3]| landmarks.push(Landmark { position: p, descriptor: Vec::new() });
    for _ in 0..24 {
        push([rng.random_range(-650.0..650.0), rng.random_range(-400.0..400.0), d]);
    }
    for _ in 0..8 {
        push([rng.random_range(-500.0..500.0), FLOOR, rng.random_range(1500.0..1725.0)]);
    }
    for side in [-w, w] {
        for _ in 0..4 {
            push([side, rng.random_range(-300.0..300.0), rng.random_range(1500.0..1725.0)]);
        }
    }

    let seg = |a: [f64; 3], b: [f64; 3]| SceneLine {
        start: a,
        end: b,
        descriptor: Vec::new(),
    };
    let lines = vec![
        seg([-650.0, -425.0, d], [650.0, -425.0, d]),
        seg([-650.0, -150.0, d], [-100.0, -150.0, d]),
        seg([100.0, 125.0, d], [650.0, 125.0, d]),
        seg([-600.0, 375.0, d], [600.0, 375.0, d]),
        seg([-500.0, -450.0, d], [-500.0, 425.0, d]),
        seg([-150.0, -300.0, d], [-150.0, 350.0, d]),
        seg([250.0, -450.0, d], [250.0, 300.0, d]),
        seg([575.0, -350.0, d], [575.0, 425.0, d]),
        seg([-400.0, FLOOR, 1550.0], [400.0, FLOOR, 1550.0]),
        seg([-450.0, FLOOR, 1675.0], [450.0, FLOOR, 1675.0]),
        seg([-w, -200.0, 1450.0], [-w, -200.0, 1725.0]),
        seg([w, 200.0, 1450.0], [w, 200.0, 1725.0]),
    ];

    let trajectory = (0..FRAMES)
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / FRAMES as f64;
            let position = Vector3::new(RADIUS * theta.cos(), 0.0, RADIUS * theta.sin());
            let yaw = 5f64.to_radians() * theta.sin();
            let pitch = 2f64.to_radians() * theta.cos();
            let rot = UnitQuaternion::from_euler_angles(pitch, yaw, 0.0);
            TruthPose::from_isometry(i as f64 / RATE, &Isometry3::from_parts(position.into(), rot))
        })
        .collect();

    let mut scene = SceneSpec {
        camera: CameraIntrinsics::tum_default().scaled(0.5),
        depth_scale: DEFAULT_DEPTH_SCALE,
        seed,
        descriptor_dim: default_descriptor_dim(),
        noise: NoiseSpec::default(),
        planes,
        lines,
        landmarks,
        trajectory,
    };
    scene.resolve_descriptors();
    scene
}

/// Static camera facing a single wall at `distance` mm for `frames` frames.
pub fn static_plane(distance: f64, frames: usize, seed: u64) -> SceneSpec {
    let s = 10.0 * distance;
    let mut scene = SceneSpec {
        camera: CameraIntrinsics::tum_default().scaled(0.5),
        depth_scale: DEFAULT_DEPTH_SCALE,
        seed,
        descriptor_dim: default_descriptor_dim(),
        noise: NoiseSpec {
            outlier_fraction: 0.0,
            ..NoiseSpec::default()
        },
        planes: vec![ScenePlane {
            vertices: vec![[-s, -s, distance], [s, -s, distance], [s, s, distance], [-s, s, distance]],
        }],
        lines: Vec::new(),
        landmarks: Vec::new(),
        trajectory: (0..frames)
            .map(|i| TruthPose::from_isometry(i as f64 / 30.0, &Isometry3::identity()))
            .collect(),
    };
    scene.resolve_descriptors();
    scene
}
