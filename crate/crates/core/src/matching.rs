//! Frame-to-frame association of points, lines and planes.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::geometry::{Line2, Line3, PlaneParams, PlaneSegment, Point3};

#[derive(Debug, Clone, PartialEq)]
pub struct PointFeature {
    pub pixel: Vector2<f64>,
    pub descriptor: Vec<f64>,
    pub point: Option<Point3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineFeature {
    pub endpoints: [Vector2<f64>; 2],
    pub descriptor: Vec<f64>,
    pub line: Option<Line3>,
}

impl LineFeature {
    pub fn image_line(&self) -> Option<Line2> {
        Line2::through(&self.endpoints[0], &self.endpoints[1])
    }
}

/// Features detected in one frame, optionally carrying fitted 3D geometry.
#[derive(Debug, Clone, Default)]
pub struct FeatureFrame {
    pub points: Vec<PointFeature>,
    pub lines: Vec<LineFeature>,
    pub planes: Vec<PlaneSegment>,
}

/// Index pairs `(previous, current)` per feature type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchSets {
    pub points: Vec<(usize, usize)>,
    pub lines: Vec<(usize, usize)>,
    pub planes: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchParams {
    /// Lowe ratio between best and second-best descriptor distance.
    pub ratio: f64,
    pub max_pixel_dist: f64,
    pub max_line_angle_deg: f64,
    pub max_line_origin_diff: f64,
    pub max_plane_angle_deg: f64,
    /// Largest offset difference between matched planes, in mm.
    pub max_plane_offset: f64,
    /// Required mask overlap as a fraction of the smaller plane's inliers.
    pub min_plane_overlap: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            ratio: 0.8,
            max_pixel_dist: 60.0,
            max_line_angle_deg: 10.0,
            max_line_origin_diff: 40.0,
            max_plane_angle_deg: 10.0,
            max_plane_offset: 100.0,
            min_plane_overlap: 0.5,
        }
    }
}

fn descriptor_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Clone, Copy)]
struct Candidate {
    index: usize,
    distance: f64,
    displacement: f64,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    (a.distance, a.displacement) < (b.distance, b.displacement)
}

/// Two nearest neighbours by descriptor distance, ties broken by pixel displacement.
fn two_nearest(
    n: usize,
    mut dist: impl FnMut(usize) -> (f64, f64),
) -> (Option<Candidate>, Option<Candidate>) {
    let mut best: Option<Candidate> = None;
    let mut second: Option<Candidate> = None;
    for index in 0..n {
        let (distance, displacement) = dist(index);
        let c = Candidate {
            index,
            distance,
            displacement,
        };
        match best {
            Some(b) if !better(&c, &b) => {
                if second.is_none_or(|s| better(&c, &s)) {
                    second = Some(c);
                }
            }
            _ => {
                second = best;
                best = Some(c);
            }
        }
    }
    (best, second)
}

fn mutual_filter(
    n_prev: usize,
    n_cur: usize,
    forward: impl Fn(usize) -> Option<usize>,
    backward: impl Fn(usize) -> Option<usize>,
) -> Vec<(usize, usize)> {
    let back: Vec<Option<usize>> = (0..n_cur).map(backward).collect();
    (0..n_prev)
        .filter_map(|i| forward(i).filter(|&j| back[j] == Some(i)).map(|j| (i, j)))
        .collect()
}

/// Descriptor k-NN point matching with ratio test, pixel gate and mutual best.
pub fn match_points(prev: &FeatureFrame, cur: &FeatureFrame, params: &MatchParams) -> Vec<(usize, usize)> {
    let (p, c) = (&prev.points, &cur.points);
    let pair = |i: usize, j: usize| {
        (
            descriptor_distance(&p[i].descriptor, &c[j].descriptor),
            (p[i].pixel - c[j].pixel).norm(),
        )
    };
    let forward = |i: usize| {
        let (best, second) = two_nearest(c.len(), |j| pair(i, j));
        let best = best?;
        let ratio_ok = second.is_none_or(|s| best.distance < params.ratio * s.distance);
        (ratio_ok && best.displacement <= params.max_pixel_dist).then_some(best.index)
    };
    let backward = |j: usize| two_nearest(p.len(), |i| pair(i, j)).0.map(|b| b.index);
    mutual_filter(p.len(), c.len(), forward, backward)
}

/// Descriptor k-NN line matching gated by slope angle and origin distance.
pub fn match_lines(prev: &FeatureFrame, cur: &FeatureFrame, params: &MatchParams) -> Vec<(usize, usize)> {
    let (p, c) = (&prev.lines, &cur.lines);
    let pl: Vec<Option<Line2>> = p.iter().map(LineFeature::image_line).collect();
    let cl: Vec<Option<Line2>> = c.iter().map(LineFeature::image_line).collect();
    let max_angle = params.max_line_angle_deg.to_radians();
    let geometric = |i: usize, j: usize| match (&pl[i], &cl[j]) {
        (Some(a), Some(b)) => {
            crate::geometry::slope_difference(a.slope_angle(), b.slope_angle()) <= max_angle
                && (a.origin_distance() - b.origin_distance()).abs() <= params.max_line_origin_diff
        }
        _ => false,
    };
    let midpoint = |f: &LineFeature| (f.endpoints[0] + f.endpoints[1]) * 0.5;
    let pair = |i: usize, j: usize| {
        (
            descriptor_distance(&p[i].descriptor, &c[j].descriptor),
            (midpoint(&p[i]) - midpoint(&c[j])).norm(),
        )
    };
    let forward = |i: usize| {
        let best = two_nearest(c.len(), |j| pair(i, j)).0?;
        geometric(i, best.index).then_some(best.index)
    };
    let backward = |j: usize| two_nearest(p.len(), |i| pair(i, j)).0.map(|b| b.index);
    mutual_filter(p.len(), c.len(), forward, backward)
}

/// Distance between the closest-to-origin points of two planes, `‖d_b N_b − d_a N_a‖`.
pub fn plane_to_plane_distance(a: &PlaneParams, b: &PlaneParams) -> f64 {
    (b.normal * b.d - a.normal * a.d).norm()
}

/// Plane matching under angle, offset and mask-overlap constraints, greedy by
/// plane-to-plane distance.
pub fn match_planes(prev: &[PlaneSegment], cur: &[PlaneSegment], params: &MatchParams) -> Vec<(usize, usize)> {
    let max_angle = params.max_plane_angle_deg.to_radians();
    let mut candidates = Vec::new();
    for (i, a) in prev.iter().enumerate() {
        for (j, b) in cur.iter().enumerate() {
            let cos = a.plane.normal.dot(&b.plane.normal).clamp(-1.0, 1.0);
            if cos.acos() >= max_angle || (a.plane.d - b.plane.d).abs() >= params.max_plane_offset {
                continue;
            }
            let smaller = a.mask.count().min(b.mask.count());
            if smaller == 0 || (a.mask.overlap(&b.mask) as f64) < params.min_plane_overlap * smaller as f64 {
                continue;
            }
            candidates.push((plane_to_plane_distance(&a.plane, &b.plane), i, j));
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut used_prev = vec![false; prev.len()];
    let mut used_cur = vec![false; cur.len()];
    let mut out = Vec::new();
    for (_, i, j) in candidates {
        if !used_prev[i] && !used_cur[j] {
            used_prev[i] = true;
            used_cur[j] = true;
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

/// Matches every feature type between two frames.
pub fn match_frames(prev: &FeatureFrame, cur: &FeatureFrame, params: &MatchParams) -> MatchSets {
    MatchSets {
        points: match_points(prev, cur, params),
        lines: match_lines(prev, cur, params),
        planes: match_planes(&prev.planes, &cur.planes, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PixelMask;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn point(u: f64, v: f64, desc: &[f64]) -> PointFeature {
        PointFeature {
            pixel: Vector2::new(u, v),
            descriptor: desc.to_vec(),
            point: None,
        }
    }

    fn line(p1: (f64, f64), p2: (f64, f64), desc: &[f64]) -> LineFeature {
        LineFeature {
            endpoints: [Vector2::new(p1.0, p1.1), Vector2::new(p2.0, p2.1)],
            descriptor: desc.to_vec(),
            line: None,
        }
    }

    fn random_frame(rng: &mut ChaCha8Rng, n: usize) -> FeatureFrame {
        let desc = |rng: &mut ChaCha8Rng| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        FeatureFrame {
            points: (0..n)
                .map(|_| {
                    let d = desc(rng);
                    point(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0), &d)
                })
                .collect(),
            lines: (0..n)
                .map(|_| {
                    let d = desc(rng);
                    line(
                        (rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
                        (rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
                        &d,
                    )
                })
                .collect(),
            planes: Vec::new(),
        }
    }

    fn segment(normal: Vector3<f64>, d: f64, pixels: std::ops::Range<usize>) -> PlaneSegment {
        let mut mask = PixelMask::new(20, 20);
        pixels.for_each(|i| mask.set(i));
        PlaneSegment {
            mask,
            inliers: Vec::new(),
            plane: PlaneParams::from_hessian(normal, d).unwrap(),
        }
    }

    #[test]
    fn identical_frames_self_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_frame(&mut rng, 30);
        let m = match_frames(&f, &f, &MatchParams::default());
        assert_eq!(m.points, (0..30).map(|i| (i, i)).collect::<Vec<_>>());
        assert_eq!(m.lines, (0..30).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn displaced_point_is_not_matched() {
        let a = FeatureFrame {
            points: vec![point(100.0, 100.0, &[1.0, 0.0])],
            ..Default::default()
        };
        let b = FeatureFrame {
            points: vec![point(100.0, 161.0, &[1.0, 0.0])],
            ..Default::default()
        };
        assert!(match_points(&a, &b, &MatchParams::default()).is_empty());
    }

    #[test]
    fn closer_descriptor_wins() {
        let a = FeatureFrame {
            points: vec![point(100.0, 100.0, &[0.0, 0.0])],
            ..Default::default()
        };
        let b = FeatureFrame {
            points: vec![point(110.0, 100.0, &[2.0, 0.0]), point(90.0, 100.0, &[1.0, 0.0])],
            ..Default::default()
        };
        assert_eq!(match_points(&a, &b, &MatchParams::default()), vec![(0, 1)]);
    }

    #[test]
    fn ambiguous_descriptor_fails_ratio() {
        let a = FeatureFrame {
            points: vec![point(100.0, 100.0, &[0.0, 0.0])],
            ..Default::default()
        };
        let b = FeatureFrame {
            points: vec![point(110.0, 100.0, &[1.0, 0.0]), point(90.0, 100.0, &[0.0, 1.05])],
            ..Default::default()
        };
        assert!(match_points(&a, &b, &MatchParams::default()).is_empty());
    }

    #[test]
    fn descriptor_ties_prefer_smaller_displacement() {
        let a = FeatureFrame {
            points: vec![point(100.0, 100.0, &[0.0])],
            ..Default::default()
        };
        let b = FeatureFrame {
            points: vec![point(130.0, 100.0, &[1.0]), point(105.0, 100.0, &[1.0])],
            ..Default::default()
        };
        let params = MatchParams {
            ratio: 1.01,
            ..Default::default()
        };
        assert_eq!(match_points(&a, &b, &params), vec![(0, 1)]);
    }

    #[test]
    fn rotated_line_is_rejected() {
        let a = FeatureFrame {
            lines: vec![line((100.0, 100.0), (300.0, 100.0), &[1.0])],
            ..Default::default()
        };
        let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        let b = FeatureFrame {
            lines: vec![line((100.0, 100.0), (100.0 + 200.0 * c, 100.0 + 200.0 * s), &[1.0])],
            ..Default::default()
        };
        assert!(match_lines(&a, &b, &MatchParams::default()).is_empty());
    }

    #[test]
    fn offset_parallel_line_is_rejected() {
        // Horizontal lines at v=100 and v=141 have origin distances 100 and 141.
        let a = FeatureFrame {
            lines: vec![line((100.0, 100.0), (300.0, 100.0), &[1.0])],
            ..Default::default()
        };
        let near = FeatureFrame {
            lines: vec![line((100.0, 139.0), (300.0, 139.0), &[1.0])],
            ..Default::default()
        };
        let far = FeatureFrame {
            lines: vec![line((100.0, 141.0), (300.0, 141.0), &[1.0])],
            ..Default::default()
        };
        assert_eq!(match_lines(&a, &near, &MatchParams::default()), vec![(0, 0)]);
        assert!(match_lines(&a, &far, &MatchParams::default()).is_empty());
    }

    #[test]
    fn plane_distance_examples() {
        let z = |d| PlaneParams::from_hessian(Vector3::z(), d).unwrap();
        assert_eq!(plane_to_plane_distance(&z(1000.0), &z(1000.0)), 0.0);
        assert!((plane_to_plane_distance(&z(1000.0), &z(1050.0)) - 50.0).abs() < 1e-9);
        let a = PlaneParams::from_hessian(Vector3::x(), 1000.0).unwrap();
        let b = PlaneParams::from_hessian(Vector3::y(), 1000.0).unwrap();
        assert!((plane_to_plane_distance(&a, &b) - 2f64.sqrt() * 1000.0).abs() < 1e-9);
    }

    #[test]
    fn plane_matching_cases() {
        let p = MatchParams::default();
        let a = vec![segment(Vector3::z(), 1000.0, 0..200)];
        assert_eq!(match_planes(&a, &a, &p), vec![(0, 0)]);

        let disjoint = vec![segment(Vector3::z(), 1000.0, 200..400)];
        assert!(match_planes(&a, &disjoint, &p).is_empty());

        let two = vec![
            segment(Vector3::z(), 1040.0, 0..200),
            segment(Vector3::z(), 1010.0, 0..200),
        ];
        assert_eq!(match_planes(&a, &two, &p), vec![(0, 1)]);

        let tilted = vec![segment(Vector3::new(0.0, 0.2, 1.0), 1000.0, 0..200)];
        assert!(match_planes(&a, &tilted, &p).is_empty());
    }

    proptest! {
        #[test]
        fn matches_are_one_to_one(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_frame(&mut rng, 25);
            let b = random_frame(&mut rng, 25);
            let m = match_frames(&a, &b, &MatchParams { ratio: 1.0, max_pixel_dist: 1e4, max_line_origin_diff: 1e4, max_line_angle_deg: 90.0, ..Default::default() });
            for set in [&m.points, &m.lines] {
                let mut prev: Vec<usize> = set.iter().map(|x| x.0).collect();
                let mut cur: Vec<usize> = set.iter().map(|x| x.1).collect();
                prev.sort_unstable();
                prev.dedup();
                cur.sort_unstable();
                cur.dedup();
                prop_assert_eq!(prev.len(), set.len());
                prop_assert_eq!(cur.len(), set.len());
            }
        }

        #[test]
        fn self_match_is_symmetric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_frame(&mut rng, 10);
            let b = random_frame(&mut rng, 10);
            let p = MatchParams { ratio: f64::INFINITY, max_pixel_dist: 1e4, ..Default::default() };
            let ab = match_points(&a, &b, &p);
            let mut ba: Vec<(usize, usize)> = match_points(&b, &a, &p).into_iter().map(|(i, j)| (j, i)).collect();
            ba.sort_unstable();
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn plane_distance_is_a_metric(
            n in proptest::array::uniform3(proptest::array::uniform3(-1.0f64..1.0)),
            d in proptest::array::uniform3(100.0f64..3000.0),
        ) {
            let planes: Vec<PlaneParams> = n.iter().zip(d)
                .filter_map(|(n, d)| PlaneParams::from_hessian(Vector3::from(*n), d).ok())
                .collect();
            prop_assume!(planes.len() == 3);
            let f = plane_to_plane_distance;
            prop_assert!(f(&planes[0], &planes[1]) >= 0.0);
            prop_assert!(f(&planes[0], &planes[0]) == 0.0);
            prop_assert!((f(&planes[0], &planes[1]) - f(&planes[1], &planes[0])).abs() < 1e-9);
            prop_assert!(f(&planes[0], &planes[2]) <= f(&planes[0], &planes[1]) + f(&planes[1], &planes[2]) + 1e-9);
        }
    }
}
