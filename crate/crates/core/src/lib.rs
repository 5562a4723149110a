//! Uncertainty-aware RGB-D visual odometry.
//!
//! The crate is organised around the stages a frame goes through:
//!
//! - [`depth_filter`]: per-pixel sensor variance, Gaussian-mixture spatial
//!   convolution and temporal range-space fusion over a sliding window.
//! - [`geometry`]: probabilistic back-projection, weighted least-squares plane
//!   and 3D line fitting, and a region-growing plane segmenter.
//! - [`matching`]: frame-to-frame association of points, lines and planes.
//! - [`pose`]: rigid transforms with covariance, residual models and the
//!   iteratively reweighted Levenberg-Marquardt pose solver.
//! - [`pipeline`]: the per-frame odometry loop.
//! - [`synthetic`]: ground-truth scenes rendered to depth maps and feature files.
//! - [`eval`]: TUM-format ingestion, trajectory metrics and the CLI driver.
//!
//! Lengths are millimetres everywhere except in trajectory files, which use
//! metres to match the TUM convention.

pub mod depth_filter;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod matching;
pub mod pipeline;
pub mod pose;
pub mod synthetic;

pub use error::{Error, Result};
