//! Quadrotor flight-dynamics simulation at desk scale.
//!
//! The crate provides three building blocks used by the controller and
//! learning crates above it:
//!
//! * [`vehicle`] — vehicle parameter sets, the X-configuration allocation
//!   matrix and its mixer, and design-informed randomization: a single size
//!   factor `c` drives arm length linearly, mass by a cubic law, inertia by a
//!   quintic law, drag quadratically and the thrust coefficient
//!   exponentially, so that sampled vehicles stay physically plausible
//!   instead of being independent draws per parameter.
//! * [`sim`] — a fixed-step (500 Hz) rigid-body integrator with first-order
//!   motor lag, linear body drag, measurement latency and crash detection.
//! * [`traj`] — minimum-jerk quintic references, circle references with a
//!   min-jerk lead-in, and random end-state sampling.
//!
//! Everything is `f64` and deterministic given a seeded RNG; the simulator
//! itself consumes no randomness unless sensor noise is enabled.

pub mod sim;
pub mod traj;
pub mod vehicle;

use thiserror::Error;

/// Errors from parameter validation and trajectory generation.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid range for {name}: [{min}, {max}]")]
    InvalidRange { name: &'static str, min: f64, max: f64 },
    #[error("trajectory duration must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub use sim::{CrashCause, Observation, SimConfig, SimState, Simulator};
pub use traj::{CircleReference, RefSample, Reference, Trajectory, TrajectorySpec};
pub use vehicle::{
    sample_disturbance, sample_vehicle, ParamRanges, Range, SizeFactor, VehicleParams, GRAVITY,
    SIZE_FACTOR_FLOOR, THRUST_MARGIN,
};
