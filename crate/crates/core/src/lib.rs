//! Range-only circumnavigation of a stationary target.
//!
//! A constant-speed unicycle is steered onto a circle of radius `r_d` around
//! a target whose position is unknown, using only the measured range. The
//! crate provides
//!
//! * the kinematics in world and target-relative coordinates ([`geometry`],
//!   [`dynamics`]),
//! * the bounded switching guidance law and its gain checks ([`guidance`]),
//! * a sliding-mode range-rate estimator with freeze/reset across the aim
//!   circle ([`estimator`]),
//! * numerical verification of the stability properties ([`analysis`]),
//! * scenario files, output writers and parameter sweeps ([`scenario`],
//!   [`output`], [`sweep`]).

pub mod analysis;
pub mod dynamics;
pub mod estimator;
pub mod geometry;
pub mod guidance;
pub mod output;
pub mod quadrature;
pub mod scenario;
pub mod sweep;

pub use dynamics::{run, run_polar, GainPolicy, RunOutput, SimConfig, TrajectoryRecord};
pub use estimator::{EstimatorParams, EstimatorState, ResetRadiusMode};
pub use geometry::{CartesianState, PolarState, TargetPosition};
pub use guidance::{ControllerMode, GuidanceParams};
