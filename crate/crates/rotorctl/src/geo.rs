//! Geometric tracking controller with adaptive force and moment estimates.
//!
//! Runs the whole stack at the simulation rate. The translational loop is
//! the same PD structure as the high-level PID, but the commanded thrust
//! vector additionally carries an integral estimate theta_f of an unknown
//! world-frame force, adapted from the velocity and position error. The
//! rotational loop adds a body-frame moment estimate theta_m adapted from
//! the rate error. Both estimates are norm-projected so a transient cannot
//! wind them up past what the nominal vehicle could ever need.

use nalgebra::{Vector3, Vector4};
use rotorsim::{Observation, RefSample, VehicleParams};

use crate::highlevel::{tilt_yaw_rates, HighLevelGains};
use crate::pd::{speeds_from_forces, RateGains};
use crate::HighLevelCommand;

#[derive(Debug, Clone, Copy)]
pub struct GeoConfig {
    /// Force adaptation gain, N per (m/s * s).
    pub gamma_f: f64,
    /// Moment adaptation gain, N*m per (rad/s * s).
    pub gamma_m: f64,
    /// Weight of the position error inside the force adaptation signal.
    pub c1: f64,
    /// Force estimate bound as a multiple of nominal weight.
    pub force_bound: f64,
    /// Moment estimate bound as a multiple of nominal weight times arm.
    pub moment_bound: f64,
}

impl Default for GeoConfig {
    /// Gains tuned on the nominal vehicle, then backed off until the
    /// controller also survives heavy model mismatch: larger gains adapt
    /// faster on a matched plant but let the force estimate steer the
    /// thrust direction into oscillation when the realized thrust differs
    /// from the commanded one by a large factor.
    fn default() -> Self {
        Self {
            gamma_f: 0.7,
            gamma_m: 0.02,
            c1: 1.0,
            force_bound: 2.0,
            moment_bound: 2.0,
        }
    }
}

pub struct GeoAdaptive {
    cfg: GeoConfig,
    nominal: VehicleParams,
    hl: HighLevelGains,
    rate: RateGains,
    theta_f: Vector3<f64>,
    theta_m: Vector3<f64>,
    last_cmd: HighLevelCommand,
    /// Whether the last allocation clipped a rotor; adaptation pauses then.
    saturated: bool,
}

fn project(v: &mut Vector3<f64>, bound: f64) {
    let n = v.norm();
    if n > bound {
        *v *= bound / n;
    }
}

impl GeoAdaptive {
    pub fn new(cfg: GeoConfig, nominal: VehicleParams, hl: HighLevelGains, rate: RateGains) -> Self {
        let hover = HighLevelCommand::hover(hl.gravity);
        Self {
            cfg,
            nominal,
            hl,
            rate,
            theta_f: Vector3::zeros(),
            theta_m: Vector3::zeros(),
            last_cmd: hover,
            saturated: false,
        }
    }

    /// Estimated unmodeled world-frame force in N (positive z opposes a
    /// downward disturbance).
    pub fn theta_f(&self) -> &Vector3<f64> {
        &self.theta_f
    }

    /// Estimated unmodeled body-frame moment in N*m.
    pub fn theta_m(&self) -> &Vector3<f64> {
        &self.theta_m
    }

    /// Thrust and rate setpoint produced by the most recent update.
    pub fn last_command(&self) -> &HighLevelCommand {
        &self.last_cmd
    }

    pub fn command(&mut self, obs: &Observation, r: &RefSample, dt: f64) -> Vector4<f64> {
        let e_p = obs.pos - r.pos;
        let e_v = obs.vel - r.vel;
        let kp = self.hl.natural_freq * self.hl.natural_freq;
        let kv = 2.0 * self.hl.damping * self.hl.natural_freq;
        let a_cmd = r.acc - kv * e_v - kp * e_p;

        let m_n = self.nominal.mass;
        let f_des =
            m_n * (a_cmd + Vector3::new(0.0, 0.0, self.hl.gravity)) + self.theta_f;

        // The update assumes the commanded wrench is what the rotors apply.
        // While the allocation clips, that assumption is false and the
        // integral would wind up against the saturation, so pause it.
        if !self.saturated {
            self.theta_f += dt * (-self.cfg.gamma_f) * (e_v + self.cfg.c1 * e_p);
            project(&mut self.theta_f, self.cfg.force_bound * m_n * self.hl.gravity);
        }

        let norm = f_des.norm();
        let (c_sigma_des, omega_des) = if norm < 1e-6 {
            (0.0, Vector3::zeros())
        } else {
            let rates = tilt_yaw_rates(
                &obs.att,
                &(f_des / norm),
                0.0,
                self.hl.attitude_tc,
                self.hl.yaw_tc,
            );
            (norm / m_n, rates)
        };

        self.last_cmd = HighLevelCommand {
            c_sigma_des,
            omega_des,
        };

        let e_w = obs.omega - omega_des;
        let j = &self.nominal.inertia;
        let tau = j.component_mul(&(-self.rate.k.component_mul(&e_w)))
            + obs.omega.cross(&j.component_mul(&obs.omega))
            + self.theta_m;

        if !self.saturated {
            self.theta_m += dt * (-self.cfg.gamma_m) * e_w;
            project(
                &mut self.theta_m,
                self.cfg.moment_bound * m_n * self.hl.gravity * self.nominal.moment_arm(),
            );
        }

        let wrench = Vector4::new(m_n * c_sigma_des, tau.x, tau.y, tau.z);
        let forces = self.nominal.mixer() * wrench;
        let wmax = self.nominal.max_motor_speed;
        self.saturated = forces
            .iter()
            .any(|&f| f < 0.0 || (f / self.nominal.thrust_coeff).sqrt() >= wmax);
        speeds_from_forces(&forces, &self.nominal)
    }
}
