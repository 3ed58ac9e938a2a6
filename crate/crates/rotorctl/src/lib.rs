//! Flight controllers for the quadrotor benchmark.
//!
//! Every controller stack is split at the same interface: a *high-level*
//! loop turns position references into a mass-normalized collective thrust
//! plus a desired body rate, and a *low-level* loop turns that command into
//! four motor speeds. The high-level loop runs at 50 Hz, the low-level loop
//! at the full 500 Hz simulation rate.
//!
//! Implemented stacks:
//!
//! * [`HighLevelPid`] + [`LowLevelPd`]: the baseline cascade. Instantiated
//!   with the true vehicle parameters it is the expert used for imitation
//!   and as an upper reference; with the nominal parameters it is the
//!   non-adaptive lower baseline.
//! * [`L1LowLevel`] / [`L1HighLevel`]: piecewise-constant adaptation with a
//!   state predictor and low-pass filtered compensation, attached below or
//!   above the PD rate loop.
//! * [`GeoAdaptive`]: geometric tracking control with projected integral
//!   estimates of an unknown force and moment.
//! * [`IndiAdaptive`]: incremental inversion of an online-identified
//!   control-effectiveness matrix.

pub mod geo;
pub mod highlevel;
pub mod indi;
pub mod l1;
pub mod pd;

use nalgebra::Vector3;

pub use geo::{GeoAdaptive, GeoConfig};
pub use highlevel::{tilt_yaw_rates, HighLevelGains, HighLevelPid};
pub use indi::{nominal_effectiveness, IndiAdaptive, IndiConfig, IndiInputs};
pub use l1::{L1Config, L1HighLevel, L1LowLevel};
pub use pd::{rate_pd_forces, speeds_from_forces, LowLevelPd, RateGains};

use rotorsim::{Observation, RefSample, VehicleParams};

/// Output of a high-level loop: mass-normalized collective thrust in m/s^2
/// and a desired body rate in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighLevelCommand {
    pub c_sigma_des: f64,
    pub omega_des: Vector3<f64>,
}

impl HighLevelCommand {
    /// Command that holds a level hover under the given gravity.
    pub fn hover(gravity: f64) -> Self {
        Self {
            c_sigma_des: gravity,
            omega_des: Vector3::zeros(),
        }
    }
}

/// Gain and rate settings shared by all controller stacks.
#[derive(Debug, Clone)]
pub struct ControlConfig {
    pub highlevel: HighLevelGains,
    pub rate: RateGains,
    pub l1: L1Config,
    pub geo: GeoConfig,
    pub indi: IndiConfig,
    /// Low-level steps per high-level update (10 -> 50 Hz at dt = 2 ms).
    pub hl_every: usize,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            highlevel: HighLevelGains::default(),
            rate: RateGains::default(),
            l1: L1Config::default(),
            geo: GeoConfig::default(),
            indi: IndiConfig::default(),
            hl_every: 10,
        }
    }
}

/// High-level loop variants that fit the shared cascade.
#[allow(clippy::large_enum_variant)]
pub enum HighLevel {
    Pid(HighLevelPid),
    L1(L1HighLevel),
}

impl HighLevel {
    pub fn update(&mut self, obs: &Observation, r: &RefSample, dt: f64) -> HighLevelCommand {
        match self {
            HighLevel::Pid(c) => c.update(obs, r),
            HighLevel::L1(c) => c.update(obs, r, dt),
        }
    }
}

/// Low-level loop variants that fit the shared cascade.
pub enum LowLevel {
    /// PD rate loop evaluated with the given parameter belief. True
    /// parameters give the expert; nominal parameters give the baseline.
    Pd {
        pd: LowLevelPd,
        params: VehicleParams,
    },
    L1(L1LowLevel),
    Indi(IndiAdaptive),
}

impl LowLevel {
    pub fn command(&mut self, cmd: &HighLevelCommand, obs: &Observation, dt: f64) -> [f64; 4] {
        let v = match self {
            LowLevel::Pd { pd, params } => pd.command(cmd, obs, params),
            LowLevel::L1(c) => c.command(cmd, obs, dt),
            LowLevel::Indi(c) => c.command(cmd, obs, dt),
        };
        [v.x, v.y, v.z, v.w]
    }
}

/// A high-level loop held at 50 Hz over a 500 Hz low-level loop.
pub struct Cascade {
    pub high: HighLevel,
    pub low: LowLevel,
    held: HighLevelCommand,
    hl_every: usize,
    steps: usize,
}

impl Cascade {
    pub fn new(high: HighLevel, low: LowLevel, hl_every: usize, gravity: f64) -> Self {
        Self {
            high,
            low,
            held: HighLevelCommand::hover(gravity),
            hl_every: hl_every.max(1),
            steps: 0,
        }
    }

    /// Advance one low-level step, refreshing the high-level command on its
    /// own schedule, and return the four motor speed commands.
    pub fn command(&mut self, obs: &Observation, r: &RefSample, dt: f64) -> [f64; 4] {
        if self.steps.is_multiple_of(self.hl_every) {
            let hl_dt = dt * self.hl_every as f64;
            self.held = self.high.update(obs, r, hl_dt);
        }
        self.steps += 1;
        self.low.command(&self.held, obs, dt)
    }

    /// Most recent high-level command (useful for logging and rewards).
    pub fn held(&self) -> &HighLevelCommand {
        &self.held
    }
}
