use serde::{Deserialize, Serialize};

use crate::geometry::CameraIntrinsics;
use crate::{Error, Result};

/// Dense depth image in mm; zero marks a missing measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    z: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            z: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, z: Vec<f64>) -> Result<Self> {
        if z.len() != width * height {
            return Err(Error::SizeMismatch {
                expected: (width, height),
                got: (z.len(), 1),
            });
        }
        if let Some(bad) = z.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InputDomain(format!("depth value {bad}")));
        }
        Ok(DepthMap { width, height, z })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.z[v * self.width + u]
    }

    /// Stores a depth; non-finite or negative values are stored as invalid.
    pub fn set(&mut self, u: usize, v: usize, z: f64) {
        self.z[v * self.width + u] = if z.is_finite() && z > 0.0 { z } else { 0.0 };
    }

    pub fn is_valid(&self, index: usize) -> bool {
        self.z[index] > 0.0
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.z
    }

    pub fn valid_count(&self) -> usize {
        self.z.iter().filter(|&&z| z > 0.0).count()
    }
}

/// Per-pixel depth (or range) variance in mm²; zero where invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceMap {
    width: usize,
    height: usize,
    var: Vec<f64>,
}

impl VarianceMap {
    pub fn new(width: usize, height: usize) -> Self {
        VarianceMap {
            width,
            height,
            var: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, var: Vec<f64>) -> Result<Self> {
        if var.len() != width * height {
            return Err(Error::SizeMismatch {
                expected: (width, height),
                got: (var.len(), 1),
            });
        }
        Ok(VarianceMap { width, height, var })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.var[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, var: f64) {
        self.var[v * self.width + u] = var;
    }

    pub fn values(&self) -> &[f64] {
        &self.var
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.var
    }
}

/// Quadratic axial noise model `σ_z = c_q z²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorNoiseModel {
    /// Quadratic coefficient in mm⁻¹.
    pub quadratic: f64,
}

impl Default for SensorNoiseModel {
    fn default() -> Self {
        SensorNoiseModel {
            quadratic: 1.425e-6,
        }
    }
}

impl SensorNoiseModel {
    pub fn new(quadratic: f64) -> Result<Self> {
        if !(quadratic > 0.0 && quadratic.is_finite()) {
            return Err(Error::InputDomain(
                "noise coefficient must be positive".into(),
            ));
        }
        Ok(SensorNoiseModel { quadratic })
    }

    pub fn std_dev(&self, z: f64) -> f64 {
        self.quadratic * z * z
    }
}

/// Cosine of the angle between each pixel's viewing ray and the optical axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineMap {
    width: usize,
    height: usize,
    cos: Vec<f64>,
}

impl CosineMap {
    pub fn new(k: &CameraIntrinsics) -> Self {
        let mut cos = Vec::with_capacity(k.pixel_count());
        for v in 0..k.height {
            for u in 0..k.width {
                cos.push(1.0 / k.ray(u as f64, v as f64).norm());
            }
        }
        CosineMap {
            width: k.width,
            height: k.height,
            cos,
        }
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.cos[v * self.width + u]
    }

    pub fn at(&self, index: usize) -> f64 {
        self.cos[index]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_is_one_at_principal_point() {
        let k = CameraIntrinsics::new(500.0, 500.0, 10.0, 8.0, 21, 17).unwrap();
        let c = CosineMap::new(&k);
        assert_eq!(c.get(10, 8), 1.0);
        assert!(c.get(0, 0) < 1.0 && c.get(0, 0) > 0.0);
    }

    #[test]
    fn negative_depth_rejected() {
        assert!(DepthMap::from_vec(2, 1, vec![1.0, -1.0]).is_err());
        assert!(DepthMap::from_vec(2, 1, vec![1.0]).is_err());
        let mut d = DepthMap::new(1, 1);
        d.set(0, 0, f64::NAN);
        assert!(!d.is_valid(0));
    }

    #[test]
    fn noise_model_requires_positive_coefficient() {
        assert!(SensorNoiseModel::new(0.0).is_err());
        assert!(SensorNoiseModel::new(1e-6).is_ok());
    }
}
