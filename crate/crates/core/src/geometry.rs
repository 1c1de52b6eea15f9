//! World-frame and target-relative representations of the vehicle state.
//!
//! The vehicle pose lives in a flat world frame as `(x, y, psi)`. Relative to
//! the target it is described by the range `r` and the bearing `theta`, the
//! counter-clockwise angle from the vehicle-to-target vector to the heading.
//! With that convention the range rate is `-V cos(theta)`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ranges below this are treated as the vehicle sitting on the target.
pub const ZERO_RANGE_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("vehicle coincides with the target (range {0:e} m)")]
    ZeroRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPosition {
    pub x: f64,
    pub y: f64,
}

impl TargetPosition {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Vehicle pose. `psi` is kept unwrapped so the integrator never sees a jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

impl CartesianState {
    pub fn new(x: f64, y: f64, psi: f64) -> Self {
        Self { x, y, psi }
    }

    /// Builds a pose at range `r` from the target, placed at `position_angle`
    /// (angle of the target-to-vehicle vector), with bearing `theta`.
    pub fn from_polar(
        target: TargetPosition,
        polar: PolarState,
        position_angle: f64,
    ) -> CartesianState {
        let x = target.x + polar.r * position_angle.cos();
        let y = target.y + polar.r * position_angle.sin();
        // The vehicle-to-target vector points along position_angle + pi.
        let psi = position_angle + std::f64::consts::PI + polar.theta;
        CartesianState { x, y, psi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarState {
    pub r: f64,
    pub theta: f64,
}

/// Maps any finite angle into `[0, 2pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs.
    if w >= TAU {
        0.0
    } else {
        w
    }
}

pub fn range(state: &CartesianState, target: &TargetPosition) -> f64 {
    (state.x - target.x).hypot(state.y - target.y)
}

pub fn bearing(state: &CartesianState, target: &TargetPosition) -> Result<f64, GeometryError> {
    let r = range(state, target);
    if r < ZERO_RANGE_THRESHOLD {
        return Err(GeometryError::ZeroRange(r));
    }
    let reference = (target.y - state.y).atan2(target.x - state.x);
    Ok(wrap_angle(state.psi - reference))
}

pub fn to_polar(state: &CartesianState, target: &TargetPosition) -> Result<PolarState, GeometryError> {
    let theta = bearing(state, target)?;
    Ok(PolarState {
        r: range(state, target),
        theta,
    })
}

/// Range rate implied by the current pose, `-V cos(theta)`.
pub fn range_rate(
    state: &CartesianState,
    target: &TargetPosition,
    speed: f64,
) -> Result<f64, GeometryError> {
    let r = range(state, target);
    if r < ZERO_RANGE_THRESHOLD {
        return Err(GeometryError::ZeroRange(r));
    }
    // Projection of the velocity on the unit target-to-vehicle vector; avoids
    // a wrap/unwrap round trip through the bearing.
    let (dx, dy) = (state.x - target.x, state.y - target.y);
    Ok(speed * (dx * state.psi.cos() + dy * state.psi.sin()) / r)
}
