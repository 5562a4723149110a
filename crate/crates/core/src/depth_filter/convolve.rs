use super::{DepthMap, SensorNoiseModel, VarianceMap};
use crate::{Error, Result};

/// Weights of the 3x3 Gaussian-mixture kernel, row-major.
pub const GM_KERNEL: [[f64; 3]; 3] = [[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]];

/// Depth variance `(c_q z²)²` in mm²; zero for an invalid (zero) depth.
pub fn sensor_variance(z: f64, model: &SensorNoiseModel) -> Result<f64> {
    if z < 0.0 || z.is_nan() {
        return Err(Error::InputDomain(format!("negative depth {z}")));
    }
    let s = model.std_dev(z);
    Ok(s * s)
}

pub fn variance_map(depth: &DepthMap, model: &SensorNoiseModel) -> VarianceMap {
    let (w, h) = depth.dims();
    let var = depth
        .values()
        .iter()
        .map(|&z| model.std_dev(z).powi(2))
        .collect();
    VarianceMap::from_vec(w, h, var).expect("same dimensions")
}

/// Convolves depth with the Gaussian-mixture kernel.
///
/// Each output pixel is the mean and moment-form variance of the mixture of
/// its valid 3x3 neighbours, `Var = Σ wᵢ(zᵢ² + σᵢ²)/S − z̄²`. Neighbours
/// outside the image count as invalid. Pixels with no valid neighbour stay
/// invalid.
pub fn gm_convolve(depth: &DepthMap, var: &VarianceMap) -> Result<(DepthMap, VarianceMap)> {
    if depth.dims() != var.dims() {
        return Err(Error::SizeMismatch {
            expected: depth.dims(),
            got: var.dims(),
        });
    }
    let (w, h) = depth.dims();
    let mut out_z = DepthMap::new(w, h);
    let mut out_var = VarianceMap::new(w, h);
    let zs = depth.values();
    let vs = var.values();
    let mut members = [(0.0, 0.0, 0.0); 9];
    for v in 0..h {
        for u in 0..w {
            let mut count = 0;
            let mut s = 0.0;
            let mut mean = 0.0;
            for (dy, row) in GM_KERNEL.iter().enumerate() {
                let Some(y) = (v + dy).checked_sub(1).filter(|&y| y < h) else {
                    continue;
                };
                for (dx, &weight) in row.iter().enumerate() {
                    let Some(x) = (u + dx).checked_sub(1).filter(|&x| x < w) else {
                        continue;
                    };
                    let i = y * w + x;
                    let z = zs[i];
                    if z > 0.0 {
                        members[count] = (weight, z, vs[i]);
                        count += 1;
                        s += weight;
                        mean += weight * z;
                    }
                }
            }
            if count == 0 {
                continue;
            }
            mean /= s;
            // Σw(z² + σ²)/S − z̄², evaluated about the mean for accuracy.
            let spread: f64 = members[..count]
                .iter()
                .map(|&(wt, z, s2)| wt * ((z - mean).powi(2) + s2))
                .sum();
            out_z.set(u, v, mean);
            out_var.set(u, v, spread / s);
        }
    }
    Ok((out_z, out_var))
}
