//! Rigid transforms, residual models and the robust pose solver.
//!
//! Pose parameters are `ξ = [t_x, t_y, t_z, q₁, q₂, q₃]`: the translation in
//! mm and the vector part of a unit quaternion whose scalar part
//! `q₄ = √(1 − q₁² − q₂² − q₃²)` is kept non-negative.

mod residual;
mod se3;
mod solver;

pub use residual::{
    line_residual, plane_residual, point_residual, LineMatch, PlaneMatch, PointMatch, Residual,
};
pub use se3::{
    propagate_uncertainty, rotation_jacobian, rotation_transpose_jacobian, transition_jacobians,
    translation_eigen_max, validate_pose, Pose,
};
pub use solver::{
    estimate_pose, mad_scale, tukey_weight, IterationRecord, PoseEstimate, PoseProblem,
    SolverParams, TUKEY_C,
};
