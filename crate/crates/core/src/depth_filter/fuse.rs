use super::{depth_to_range, range_to_depth, CosineMap, DepthMap, RangePointWindow, VarianceMap};
use crate::geometry::CameraIntrinsics;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    /// Members a pixel must hold before the consistency gate applies.
    pub gate_min_members: usize,
    /// Width of the consistency gate in standard deviations.
    pub gate_sigma: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams {
            gate_min_members: 5,
            gate_sigma: 3.0,
        }
    }
}

impl FusionParams {
    /// Parameters with the consistency gate switched off.
    pub fn ungated() -> Self {
        FusionParams {
            gate_min_members: usize::MAX,
            gate_sigma: f64::INFINITY,
        }
    }
}

/// Running inverse-variance weighted Gaussian mixture.
///
/// The mean is `Σ rᵢ/σᵢ² / Σ 1/σᵢ²` and the variance is the mixture's second
/// moment about it, so disagreement between members raises the variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MixtureAccumulator {
    count: usize,
    weight: f64,
    mean: f64,
    /// Σ wᵢ (rᵢ − mean)², updated with West's recurrence.
    spread: f64,
    /// Σ wᵢ σᵢ².
    member_var: f64,
}

impl MixtureAccumulator {
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.weight > 0.0 {
            (self.spread + self.member_var) / self.weight
        } else {
            0.0
        }
    }

    pub fn push(&mut self, value: f64, var: f64) {
        let w = 1.0 / var;
        let total = self.weight + w;
        let delta = value - self.mean;
        let mean = self.mean + delta * w / total;
        self.spread += w * delta * (value - mean);
        self.member_var += w * var;
        self.mean = mean;
        self.weight = total;
        self.count += 1;
    }

    /// Adds a member unless the gate is active and the value falls outside it.
    pub fn offer(&mut self, value: f64, var: f64, params: &FusionParams) -> bool {
        if !(var > 0.0 && var.is_finite()) {
            return false;
        }
        if self.count >= params.gate_min_members {
            let margin = params.gate_sigma * self.variance().sqrt();
            if (value - self.mean).abs() > margin {
                return false;
            }
        }
        self.push(value, var);
        true
    }
}

/// Fuses the current depth map with the window's registered measurements.
///
/// Works in range space. The current measurement is the first member of each
/// pixel, then window points are projected newest frame first with
/// nearest-pixel binning. Returns depth and depth variance.
pub fn temporal_fuse(
    window: &RangePointWindow,
    depth: &DepthMap,
    var: &VarianceMap,
    k: &CameraIntrinsics,
    cosines: &CosineMap,
    params: &FusionParams,
) -> Result<(DepthMap, VarianceMap)> {
    if depth.dims() != var.dims() {
        return Err(Error::SizeMismatch {
            expected: depth.dims(),
            got: var.dims(),
        });
    }
    if depth.dims() != (k.width, k.height) || cosines.dims() != depth.dims() {
        return Err(Error::SizeMismatch {
            expected: (k.width, k.height),
            got: depth.dims(),
        });
    }
    if window.is_empty() {
        return Ok((depth.clone(), var.clone()));
    }
    let (w, h) = depth.dims();
    let mut acc = vec![MixtureAccumulator::default(); w * h];
    for (i, a) in acc.iter_mut().enumerate() {
        let z = depth.values()[i];
        let vz = var.values()[i];
        if z > 0.0 && vz > 0.0 {
            let (r, vr) = depth_to_range(z, vz, cosines.at(i));
            a.push(r, vr);
        }
    }
    for frame in window.frames().rev() {
        let rot = frame.pose.rotation.to_rotation_matrix();
        let t = frame.pose.translation;
        for i in 0..frame.len() {
            let p = rot * frame.point(i) + t;
            if !(p.z > 0.0) {
                continue;
            }
            let Some(idx) = k.pixel_index(&k.project(&p)) else {
                continue;
            };
            acc[idx].offer(p.norm(), frame.range_var[i] as f64, params);
        }
    }
    let mut out_z = DepthMap::new(w, h);
    let mut out_var = VarianceMap::new(w, h);
    for (i, a) in acc.iter().enumerate() {
        if a.count() == 0 {
            continue;
        }
        let (z, vz) = range_to_depth(a.mean(), a.variance(), cosines.at(i));
        out_z.values_mut()[i] = z;
        out_var.values_mut()[i] = vz;
    }
    Ok((out_z, out_var))
}
