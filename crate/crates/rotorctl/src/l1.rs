//! L1-style adaptive augmentation with a piecewise-constant update law.
//!
//! A state predictor runs on the reduced state z = [c_sigma, omega]. The
//! prediction error drives a matched-disturbance estimate that is
//! reconstructed exactly over one step of the error dynamics
//! zdot_tilde = A_s z_tilde + B sigma (A_s = a I, a < 0), then low-pass
//! filtered before being subtracted from the baseline command. Only the
//! filter bandwidth and the observer pole are tuning knobs.
//!
//! Two placements are provided: [`L1LowLevel`] adapts per-motor thrusts
//! below the PD rate loop at the full simulation rate, and [`L1HighLevel`]
//! adapts the collective and body-rate command above an unmodified PD loop
//! at the high-level rate.

use std::collections::VecDeque;

use nalgebra::{Matrix4, Vector3, Vector4};
use rotorsim::{Observation, RefSample, VehicleParams};

use crate::highlevel::{HighLevelGains, HighLevelPid};
use crate::pd::{rate_pd_forces, speeds_from_forces, RateGains};
use crate::HighLevelCommand;

#[derive(Debug, Clone, Copy)]
pub struct L1Config {
    /// Compensation low-pass cutoff in rad/s.
    pub cutoff: f64,
    /// Observer pole `a` of the error dynamics, must be negative.
    pub observer_pole: f64,
}

impl Default for L1Config {
    fn default() -> Self {
        Self {
            cutoff: 40.0,
            observer_pole: -10.0,
        }
    }
}

/// One-step exact gain of the piecewise-constant law: sigma_z = gain * z_tilde.
///
/// Derived from integrating the scalar error dynamics over dt; as dt -> 0 it
/// approaches -1/dt, the finite-difference reconstruction.
fn pwc_gain(pole: f64, dt: f64) -> f64 {
    let ead = (pole * dt).exp();
    -pole * ead / (ead - 1.0)
}

fn lpf_alpha(cutoff: f64, dt: f64) -> f64 {
    1.0 - (-cutoff * dt).exp()
}

/// L1 augmentation on the per-motor thrust commands.
pub struct L1LowLevel {
    cfg: L1Config,
    nominal: VehicleParams,
    gains: RateGains,
    b: Matrix4<f64>,
    z_hat: Vector4<f64>,
    filt: Vector4<f64>,
    sigma: Vector4<f64>,
    /// Commanded forces from the last `latency_steps` calls, oldest first,
    /// so the predictor sees the input that produced the delayed
    /// observation.
    u_ring: VecDeque<Vector4<f64>>,
    latency_steps: usize,
    initialized: bool,
}

impl L1LowLevel {
    pub fn new(cfg: L1Config, nominal: VehicleParams, gains: RateGains, latency_steps: usize) -> Self {
        let mut b = Matrix4::zeros();
        let a = nominal.allocation();
        for col in 0..4 {
            b[(0, col)] = 1.0 / (nominal.mass * nominal.motor_time_constant);
            for row in 0..3 {
                b[(row + 1, col)] = a[(row + 1, col)] / nominal.inertia[row];
            }
        }
        Self {
            cfg,
            nominal,
            gains,
            b,
            z_hat: Vector4::zeros(),
            filt: Vector4::zeros(),
            sigma: Vector4::zeros(),
            u_ring: VecDeque::new(),
            latency_steps,
            initialized: false,
        }
    }

    /// Current matched-disturbance estimate in per-motor force units.
    pub fn sigma_hat(&self) -> &Vector4<f64> {
        &self.sigma
    }

    pub fn command(&mut self, cmd: &HighLevelCommand, obs: &Observation, dt: f64) -> Vector4<f64> {
        let z = Vector4::new(obs.c_sigma, obs.omega.x, obs.omega.y, obs.omega.z);
        if !self.initialized {
            self.z_hat = z;
            self.initialized = true;
        }
        let z_tilde = self.z_hat - z;

        let sigma_z = pwc_gain(self.cfg.observer_pole, dt) * z_tilde;
        self.sigma = self
            .b
            .lu()
            .solve(&sigma_z)
            .unwrap_or_else(Vector4::zeros);

        let alpha = lpf_alpha(self.cfg.cutoff, dt);
        self.filt += alpha * (-self.sigma - self.filt);

        let (pd_forces, _) = rate_pd_forces(cmd, &obs.omega, &self.nominal, &self.gains);
        let total = pd_forces + self.filt;

        // Predictor step on the delayed timeline: both z and the input are
        // latency_steps old.
        let u_delayed = self.u_ring.front().copied().unwrap_or(total);
        let omega = obs.omega;
        let gyro = omega.cross(&self.nominal.inertia.component_mul(&omega));
        let tau = {
            let a = self.nominal.allocation();
            let w = a * u_delayed;
            Vector3::new(w[1], w[2], w[3]) - gyro
        };
        let f_n = Vector4::new(
            (u_delayed.sum() / self.nominal.mass - z[0]) / self.nominal.motor_time_constant,
            tau.x / self.nominal.inertia.x,
            tau.y / self.nominal.inertia.y,
            tau.z / self.nominal.inertia.z,
        );
        self.z_hat += dt * (f_n + self.b * self.sigma + self.cfg.observer_pole * z_tilde);

        self.u_ring.push_back(total);
        while self.u_ring.len() > self.latency_steps.max(1) {
            self.u_ring.pop_front();
        }

        speeds_from_forces(&total, &self.nominal)
    }
}

/// L1 augmentation on the high-level command, above a PD low level that is
/// assumed to realize the commanded torque within one tick.
pub struct L1HighLevel {
    cfg: L1Config,
    nominal: VehicleParams,
    rate: RateGains,
    pid: HighLevelPid,
    z_hat: Vector4<f64>,
    filt_c: f64,
    filt_tau: Vector3<f64>,
    initialized: bool,
}

impl L1HighLevel {
    pub fn new(cfg: L1Config, nominal: VehicleParams, hl: HighLevelGains, rate: RateGains) -> Self {
        Self {
            cfg,
            nominal,
            rate,
            pid: HighLevelPid::new(hl),
            z_hat: Vector4::zeros(),
            filt_c: 0.0,
            filt_tau: Vector3::zeros(),
            initialized: false,
        }
    }

    pub fn update(&mut self, obs: &Observation, r: &RefSample, dt: f64) -> HighLevelCommand {
        let base = self.pid.update(obs, r);
        let z = Vector4::new(obs.c_sigma, obs.omega.x, obs.omega.y, obs.omega.z);
        if !self.initialized {
            self.z_hat = z;
            self.initialized = true;
        }
        let z_tilde = self.z_hat - z;
        let sigma_z = pwc_gain(self.cfg.observer_pole, dt) * z_tilde;

        // Input-space disturbances: collective channel has gain 1/t_m, the
        // rate channels have gain 1/J (diagonal inertia).
        let sigma_c = sigma_z[0] * self.nominal.motor_time_constant;
        let sigma_tau = Vector3::new(sigma_z[1], sigma_z[2], sigma_z[3])
            .component_mul(&self.nominal.inertia);

        let alpha = lpf_alpha(self.cfg.cutoff, dt);
        self.filt_c += alpha * (-sigma_c - self.filt_c);
        self.filt_tau += alpha * (-sigma_tau - self.filt_tau);

        let c_total = (base.c_sigma_des + self.filt_c).max(0.0);
        // Torque compensation rides on the rate command: the PD loop turns
        // an omega_des offset of tau/(J K) into exactly tau.
        let jk = self.nominal.inertia.component_mul(&self.rate.k);
        let omega_total = base.omega_des + self.filt_tau.component_div(&jk);

        let omega = obs.omega;
        let f_n = Vector4::new(
            (c_total - z[0]) / self.nominal.motor_time_constant,
            self.rate.k.x * (omega_total.x - omega.x),
            self.rate.k.y * (omega_total.y - omega.y),
            self.rate.k.z * (omega_total.z - omega.z),
        );
        self.z_hat += dt * (f_n + sigma_z + self.cfg.observer_pole * z_tilde);

        HighLevelCommand {
            c_sigma_des: c_total,
            omega_des: omega_total,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pwc_gain_approaches_negated_inverse_step() {
        // For small dt the exact law degenerates to sigma = -ztilde / dt,
        // the one-step finite-difference reconstruction.
        let dt = 1e-6;
        assert_relative_eq!(pwc_gain(-10.0, dt), -1.0 / dt, max_relative = 1e-4);
    }

    #[test]
    fn pwc_law_is_dead_beat_on_the_prediction_error() {
        // Scalar error dynamics ztilde_dot = a ztilde + (sigma_hat - sigma)
        // with constant true sigma. Applying sigma_hat = gain * ztilde must
        // leave a post-step error that no longer depends on the initial
        // error, only on the fresh disturbance term -Phi * sigma.
        let (a, dt, sigma) = (-10.0_f64, 0.002, 3.7);
        let ead = (a * dt).exp();
        let phi = (ead - 1.0) / a;
        let residual = -phi * sigma;
        for z0 in [-1.0, 0.0, 0.3, 42.0] {
            let sigma_hat = pwc_gain(a, dt) * z0;
            let z1 = ead * z0 + phi * (sigma_hat - sigma);
            assert_relative_eq!(z1, residual, epsilon = 1e-12);
        }
        // The estimate itself settles within e^{a dt} of the true value.
        assert_relative_eq!(pwc_gain(a, dt) * (sigma / a) * (1.0 - ead), sigma * ead, epsilon = 1e-12);
    }

    #[test]
    fn filter_freezes_when_cutoff_is_zero() {
        assert_eq!(lpf_alpha(0.0, 0.02), 0.0);
    }
}
