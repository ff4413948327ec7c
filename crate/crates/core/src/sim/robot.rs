//! Unicycle kinematics.

use serde::{Deserialize, Serialize};

/// Planar pose; `heading` is radians from world +x (the row direction),
/// counter-clockwise positive.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Semi-implicit Euler step: rotate first, then translate along the new heading.
pub fn step(robot: &RobotState, v: f64, omega: f64, dt: f64) -> RobotState {
    debug_assert!(dt > 0.0);
    let heading = robot.heading + omega * dt;
    RobotState {
        x: robot.x + v * heading.cos() * dt,
        y: robot.y + v * heading.sin() * dt,
        heading,
    }
}

/// Wraps an angle in degrees to (-180, 180].
pub fn wrap_deg(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}
