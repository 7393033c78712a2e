//! Estimating how many objects a multi-fingered hand holds, from hand pose,
//! tactile arrays and finger strain gauges.

pub mod estimators;
pub mod force;
pub mod geometry;
pub mod kinematics;
pub mod nn;
pub mod pipeline;
pub mod simulator;

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.81;
