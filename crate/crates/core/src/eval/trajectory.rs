use std::fs;
use std::path::Path;

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};

use crate::{Error, Result};

/// Timestamped camera-to-world poses with translations in mm.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    entries: Vec<(f64, Isometry3<f64>)>,
}

impl Trajectory {
    pub fn new(entries: Vec<(f64, Isometry3<f64>)>) -> Result<Self> {
        if entries.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InputDomain("trajectory timestamps must be strictly increasing".into()));
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(f64, Isometry3<f64>)] {
        &self.entries
    }

    /// Appends a pose; the timestamp must exceed the last one.
    pub fn push(&mut self, timestamp: f64, pose: Isometry3<f64>) -> Result<()> {
        if self.entries.last().is_some_and(|l| !(timestamp > l.0)) {
            return Err(Error::InputDomain(format!("timestamp {timestamp} does not increase")));
        }
        self.entries.push((timestamp, pose));
        Ok(())
    }

    /// Pose at `t` by linear interpolation of translation and slerp of
    /// rotation; `None` outside the covered time range.
    pub fn interpolate(&self, t: f64) -> Option<Isometry3<f64>> {
        let e = &self.entries;
        let (first, last) = (e.first()?, e.last()?);
        if t < first.0 || t > last.0 {
            return None;
        }
        let i = e.partition_point(|x| x.0 < t);
        if e[i].0 == t {
            return Some(e[i].1);
        }
        let (a, b) = (&e[i - 1], &e[i]);
        let s = (t - a.0) / (b.0 - a.0);
        let tr = a.1.translation.vector.lerp(&b.1.translation.vector, s);
        let rot = a.1.rotation.slerp(&b.1.rotation, s);
        Some(Isometry3::from_parts(Translation3::from(tr), rot))
    }

    /// Applies `g ∘ pose` to every entry.
    pub fn transformed(&self, g: &Isometry3<f64>) -> Self {
        Self {
            entries: self.entries.iter().map(|(t, p)| (*t, g * p)).collect(),
        }
    }

    /// Reads `timestamp tx ty tz qx qy qz qw` lines with translation in metres.
    pub fn read_tum(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::file(path, format!("line {}: non-numeric field", n + 1)))?;
            if v.len() != 8 {
                return Err(Error::file(path, format!("line {}: expected 8 fields, got {}", n + 1, v.len())));
            }
            let q = Quaternion::new(v[7], v[4], v[5], v[6]);
            if !(q.norm() > 0.0) {
                return Err(Error::file(path, format!("line {}: zero quaternion", n + 1)));
            }
            let t = Vector3::new(v[1], v[2], v[3]) * 1000.0;
            entries.push((v[0], Isometry3::from_parts(t.into(), UnitQuaternion::from_quaternion(q))));
        }
        Self::new(entries).map_err(|e| Error::file(path, e))
    }

    pub fn write_tum(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tum_string()).map_err(|e| Error::file(path, e))
    }

    pub fn to_tum_string(&self) -> String {
        let mut s = String::from("# timestamp tx ty tz qx qy qz qw\n");
        for (t, p) in &self.entries {
            let tr = p.translation.vector / 1000.0;
            let q = p.rotation.quaternion();
            s.push_str(&format!(
                "{t:.6} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}\n",
                tr.x, tr.y, tr.z, q.i, q.j, q.k, q.w
            ));
        }
        s
    }
}
