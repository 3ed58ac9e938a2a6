//! Fixed-step rigid-body simulator.
//!
//! Semi-implicit Euler at `dt = 2 ms`: accelerations are computed from the
//! current state, velocities are advanced first and positions/attitude are
//! advanced with the new velocities. Motor speeds follow a first-order lag
//! integrated exactly; the attitude quaternion is integrated from
//! `q_dot = 0.5 q (0, omega)` and renormalized every step.

use std::collections::VecDeque;

use nalgebra::{Matrix4, Quaternion, UnitQuaternion, Vector3, Vector4};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::vehicle::VehicleParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    /// Integration and control step, s.
    pub dt: f64,
    /// Measurement latency, s (rounded up to whole steps).
    pub latency: f64,
    /// Episode length, s.
    pub episode_len: f64,
    /// Crash when the vehicle drops this far below its spawn height, m.
    pub height_loss_limit: f64,
    /// Crash when any body-rate component exceeds this, rad/s.
    pub body_rate_limit: f64,
    pub gravity: f64,
    /// Std-dev of optional Gaussian noise on the measured mass-normalized
    /// thrust, m/s^2. Zero disables the sensor RNG entirely.
    pub accel_noise_std: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.002,
            latency: 0.005,
            episode_len: 5.0,
            height_loss_limit: 10.0,
            body_rate_limit: 10.0,
            gravity: crate::vehicle::GRAVITY,
            accel_noise_std: 0.0,
        }
    }
}

impl SimConfig {
    /// Latency in whole steps, rounded up (5 ms at 500 Hz gives 3).
    pub fn latency_steps(&self) -> usize {
        (self.latency / self.dt).ceil() as usize
    }

    pub fn max_steps(&self) -> u64 {
        (self.episode_len / self.dt).round() as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrashCause {
    HeightLoss,
    BodyRate,
    NonFinite,
}

/// Full simulator state at one instant.
#[derive(Clone, Debug)]
pub struct SimState {
    pub t: f64,
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
    pub att: UnitQuaternion<f64>,
    pub omega: Vector3<f64>,
    pub motor_speed: Vector4<f64>,
    /// Measured mass-normalized collective thrust at this instant, m/s^2.
    pub c_sigma: f64,
}

/// What controllers are allowed to see: the latency-delayed state plus the
/// current wall-clock time.
#[derive(Clone, Debug)]
pub struct Observation {
    pub t: f64,
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
    pub att: UnitQuaternion<f64>,
    pub omega: Vector3<f64>,
    pub c_sigma: f64,
}

pub struct Simulator {
    config: SimConfig,
    params: VehicleParams,
    allocation: Matrix4<f64>,
    state: SimState,
    history: VecDeque<SimState>,
    start_height: f64,
    steps: u64,
    crash: Option<CrashCause>,
    sensor_rng: Option<rand_chacha::ChaCha8Rng>,
}

impl Simulator {
    /// Spawn hovering at `pos`: level attitude, zero rates, motors at hover
    /// speed. The observation history is padded with the spawn state so the
    /// first few delayed observations are well defined.
    pub fn new(config: SimConfig, params: VehicleParams, pos: Vector3<f64>) -> Self {
        let hover = params.hover_speed().min(params.max_motor_speed);
        let motor_speed = Vector4::repeat(hover);
        let c_sigma = params.thrust_coeff * motor_speed.map(|w| w * w).sum() / params.mass;
        let state = SimState {
            t: 0.0,
            pos,
            vel: Vector3::zeros(),
            att: UnitQuaternion::identity(),
            omega: Vector3::zeros(),
            motor_speed,
            c_sigma,
        };
        let mut history = VecDeque::with_capacity(config.latency_steps() + 1);
        history.push_back(state.clone());
        let allocation = params.allocation();
        Self {
            config,
            params,
            allocation,
            state,
            history,
            start_height: pos.z,
            steps: 0,
            crash: None,
            sensor_rng: None,
        }
    }

    /// Start from an arbitrary state instead of the hover spawn.
    pub fn from_state(config: SimConfig, params: VehicleParams, state: SimState) -> Self {
        let mut sim = Self::new(config, params, state.pos);
        sim.start_height = state.pos.z;
        sim.history.clear();
        sim.history.push_back(state.clone());
        sim.state = state;
        sim
    }

    /// Enable the optional thrust-measurement noise stream.
    pub fn with_sensor_seed(mut self, seed: u64) -> Self {
        self.sensor_rng = Some(rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        self
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    /// Swap vehicle parameters mid-episode (payload event). Motor and rigid
    /// body state carry over unchanged.
    pub fn set_params(&mut self, params: VehicleParams) {
        self.allocation = params.allocation();
        self.params = params;
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    pub fn crashed(&self) -> Option<CrashCause> {
        self.crash
    }

    /// Episode is over, either by crash or by reaching the time limit.
    pub fn done(&self) -> bool {
        self.crash.is_some() || self.steps >= self.config.max_steps()
    }

    /// Ran to the time limit without crashing.
    pub fn succeeded_to_end(&self) -> bool {
        self.crash.is_none() && self.steps >= self.config.max_steps()
    }

    /// Latency-delayed observation (current time, stale state).
    pub fn observe(&self) -> Observation {
        let delay = self.config.latency_steps();
        let idx = self.history.len().saturating_sub(1 + delay);
        let s = &self.history[idx];
        Observation {
            t: self.state.t,
            pos: s.pos,
            vel: s.vel,
            att: s.att,
            omega: s.omega,
            c_sigma: s.c_sigma,
        }
    }

    /// Advance one step under motor-speed commands `cmd` (rad/s).
    pub fn step(&mut self, cmd: &Vector4<f64>) -> &SimState {
        let p = &self.params;
        let dt = self.config.dt;

        // Motor lag, integrated exactly. Commands and the realized speed are
        // clamped to the motor's envelope; effectiveness acts on the command.
        let decay = (-dt / p.motor_time_constant).exp();
        let mut w = self.state.motor_speed;
        for i in 0..4 {
            let target = (cmd[i].clamp(0.0, p.max_motor_speed) * p.motor_effectiveness[i])
                .clamp(0.0, p.max_motor_speed);
            w[i] = (target + (w[i] - target) * decay).clamp(0.0, p.max_motor_speed);
        }

        let forces = w.map(|wi| p.thrust_coeff * wi * wi);
        let wrench = self.allocation * forces;
        let thrust = wrench[0];
        let torque = Vector3::new(wrench[1], wrench[2], wrench[3]) + p.external_torque;

        let r = self.state.att;
        let v_body = r.inverse_transform_vector(&self.state.vel);
        let drag_body = -p.drag_coeff.component_mul(&v_body);
        let acc = Vector3::new(0.0, 0.0, -self.config.gravity)
            + r * Vector3::new(0.0, 0.0, thrust / p.mass)
            + r * (drag_body / p.mass);

        let j = p.inertia;
        let jw = Vector3::new(j.x * self.state.omega.x, j.y * self.state.omega.y, j.z * self.state.omega.z);
        let gyro = self.state.omega.cross(&jw);
        let omega_dot = Vector3::new(
            (torque.x - gyro.x) / j.x,
            (torque.y - gyro.y) / j.y,
            (torque.z - gyro.z) / j.z,
        );

        // Semi-implicit update: velocities first, then configuration.
        let vel = self.state.vel + acc * dt;
        let pos = self.state.pos + vel * dt;
        let omega = self.state.omega + omega_dot * dt;
        let q = self.state.att.into_inner();
        let q_dot = q * Quaternion::new(0.0, omega.x, omega.y, omega.z) * 0.5;
        let att = UnitQuaternion::from_quaternion(q + q_dot * dt);

        self.steps += 1;
        let mut c_sigma = p.thrust_coeff * w.map(|wi| wi * wi).sum() / p.mass;
        if self.config.accel_noise_std > 0.0 {
            if let Some(rng) = &mut self.sensor_rng {
                // Box-Muller keeps the dependency surface small.
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                c_sigma += self.config.accel_noise_std * (-2.0 * u1.ln()).sqrt() * u2.cos();
            }
        }
        self.state = SimState {
            t: self.steps as f64 * dt,
            pos,
            vel,
            att,
            omega,
            motor_speed: w,
            c_sigma,
        };

        if self.crash.is_none() {
            let finite = pos.iter().chain(vel.iter()).chain(omega.iter()).all(|x| x.is_finite())
                && att.into_inner().coords.iter().all(|x| x.is_finite());
            if !finite {
                self.crash = Some(CrashCause::NonFinite);
            } else if self.start_height - pos.z > self.config.height_loss_limit {
                self.crash = Some(CrashCause::HeightLoss);
            } else if omega.amax() > self.config.body_rate_limit {
                self.crash = Some(CrashCause::BodyRate);
            }
        }

        self.history.push_back(self.state.clone());
        while self.history.len() > self.config.latency_steps() + 1 {
            self.history.pop_front();
        }
        &self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn latency_rounds_up_to_three_steps() {
        assert_eq!(SimConfig::default().latency_steps(), 3);
    }

    #[test]
    fn motor_step_matches_first_order_response() {
        let mut p = VehicleParams::nominal();
        p.motor_time_constant = 0.01;
        let mut cfg = SimConfig::default();
        cfg.dt = 0.01; // one time constant per step for the closed form
        let mut sim = Simulator::new(cfg, p, Vector3::zeros());
        sim.state.motor_speed = Vector4::zeros();
        sim.step(&Vector4::repeat(1000.0));
        let expected = 1000.0 * (1.0 - (-1.0f64).exp());
        assert_relative_eq!(sim.state().motor_speed[0], expected, epsilon = 1e-9);
    }

    #[test]
    fn effectiveness_scales_steady_state() {
        let mut p = VehicleParams::nominal();
        p.motor_effectiveness[0] = 0.8;
        let mut sim = Simulator::new(SimConfig::default(), p, Vector3::zeros());
        for _ in 0..2000 {
            sim.step(&Vector4::repeat(1000.0));
        }
        assert_relative_eq!(sim.state().motor_speed[0], 800.0, epsilon = 1e-6);
        assert_relative_eq!(sim.state().motor_speed[1], 1000.0, epsilon = 1e-6);
    }

    #[test]
    fn observation_is_delayed() {
        let p = VehicleParams::nominal();
        let mut sim = Simulator::new(SimConfig::default(), p.clone(), Vector3::zeros());
        let cmd = Vector4::repeat(p.hover_speed() * 1.1);
        // A change at step k becomes visible exactly latency_steps later.
        sim.step(&cmd);
        let c0 = sim.state().c_sigma;
        assert_relative_eq!(sim.observe().c_sigma, crate::vehicle::GRAVITY, epsilon = 1e-9);
        sim.step(&cmd);
        sim.step(&cmd);
        // Three steps in, the delayed view is still the spawn state.
        assert_relative_eq!(sim.observe().c_sigma, crate::vehicle::GRAVITY, epsilon = 1e-9);
        sim.step(&cmd);
        assert_relative_eq!(sim.observe().c_sigma, c0, epsilon = 1e-12);
    }

    #[test]
    fn hover_is_an_equilibrium() {
        let p = VehicleParams::nominal();
        let hover = p.hover_speed();
        let mut sim = Simulator::new(SimConfig::default(), p, Vector3::zeros());
        for _ in 0..2500 {
            sim.step(&Vector4::repeat(hover));
        }
        assert!(sim.state().pos.norm() < 1e-9);
        assert!(sim.state().omega.norm() < 1e-12);
        assert!(sim.crashed().is_none());
    }

    #[test]
    fn body_rate_limit_triggers_crash() {
        let mut p = VehicleParams::nominal();
        p.external_torque = Vector3::new(0.05, 0.0, 0.0);
        let hover = p.hover_speed();
        let mut sim = Simulator::new(SimConfig::default(), p, Vector3::zeros());
        while !sim.done() {
            sim.step(&Vector4::repeat(hover));
        }
        assert_eq!(sim.crashed(), Some(CrashCause::BodyRate));
    }
}
