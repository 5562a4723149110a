//! Three-stage probabilistic depth filter.
//!
//! 1. [`sensor_variance`]: quadratic structured-light noise model.
//! 2. [`gm_convolve`]: 3x3 Gaussian-mixture convolution; the output variance
//!    carries the spread of the neighbourhood.
//! 3. [`temporal_fuse`]: inverse-variance fusion in range space of the
//!    measurements kept in a [`RangePointWindow`].

mod convolve;
mod fuse;
mod maps;
mod range;
mod window;

pub use convolve::{gm_convolve, sensor_variance, variance_map, GM_KERNEL};
pub use fuse::{temporal_fuse, FusionParams, MixtureAccumulator};
pub use maps::{CosineMap, DepthMap, SensorNoiseModel, VarianceMap};
pub use range::{depth_to_range, range_to_depth};
pub use window::{window_prune, window_push, RangePointWindow, WindowFrame, DEFAULT_WINDOW_LEN};
