//! Incremental nonlinear dynamic inversion with online effectiveness
//! adaptation.
//!
//! The controller works in increments: the change in squared motor speeds
//! needed to move the measured [collective, body-rate derivative] onto the
//! desired one is `G * dy`, where G is a 4x4 effectiveness matrix seeded
//! from the nominal model and refined online by a normalized least-squares
//! update on consecutive measurement increments. Because it inverts
//! measured increments rather than an absolute model, steady model error
//! (wrong mass, weak motor) is absorbed without explicit estimation.

use std::collections::VecDeque;

use nalgebra::{Matrix4, Vector3, Vector4};
use rotorsim::{Observation, VehicleParams};

use crate::pd::RateGains;
use crate::HighLevelCommand;

#[derive(Debug, Clone, Copy)]
pub struct IndiConfig {
    /// Least-squares step size for the G update.
    pub mu: f64,
    /// Regularizer inside the normalized step.
    pub eps: f64,
    /// Cutoff of the two cascaded low-pass filters on the body-rate
    /// derivative, rad/s.
    pub omega_dot_cutoff: f64,
}

impl Default for IndiConfig {
    fn default() -> Self {
        Self {
            mu: 1e-4,
            eps: 1e-6,
            omega_dot_cutoff: 50.0,
        }
    }
}

/// Measurements consumed by one INDI step. In flight they come from
/// [`IndiAdaptive::command`]; tests may construct them directly to drive
/// [`IndiAdaptive::command_from`] with exact model quantities.
#[derive(Debug, Clone, Copy)]
pub struct IndiInputs {
    pub c_sigma: f64,
    pub omega: Vector3<f64>,
    pub omega_dot: Vector3<f64>,
    /// Squared motor speeds behind the measurement, rad^2/s^2.
    pub speed_sq: Vector4<f64>,
}

pub struct IndiAdaptive {
    cfg: IndiConfig,
    nominal: VehicleParams,
    gains: RateGains,
    g: Matrix4<f64>,
    /// Internal first-order motor model used as the speed measurement.
    speed_est: Vector4<f64>,
    est_ring: VecDeque<Vector4<f64>>,
    latency_steps: usize,
    prev_meas: Option<(Vector4<f64>, Vector4<f64>)>,
    prev_omega: Option<Vector3<f64>>,
    /// Cascaded low-pass states. All measurements entering the increment
    /// (body-rate derivative, collective, actuator feedback) pass through
    /// the same filter so their phase lags match; mismatched lag makes the
    /// incremental loop re-apply corrections and oscillate.
    filt1: Vector3<f64>,
    filt2: Vector3<f64>,
    cs_f1: f64,
    cs_f2: f64,
    sq_f1: Vector4<f64>,
    sq_f2: Vector4<f64>,
    initialized: bool,
    saturation_events: u64,
}

/// Effectiveness matrix of the nominal model: d(speed^2) per unit of
/// [collective, omega_dot] change, column-scaled mixer over thrust_coeff.
pub fn nominal_effectiveness(params: &VehicleParams) -> Matrix4<f64> {
    let mixer = params.mixer();
    let mut g = Matrix4::zeros();
    for row in 0..4 {
        g[(row, 0)] = mixer[(row, 0)] * params.mass / params.thrust_coeff;
        for col in 1..4 {
            g[(row, col)] = mixer[(row, col)] * params.inertia[col - 1] / params.thrust_coeff;
        }
    }
    g
}

impl IndiAdaptive {
    pub fn new(
        cfg: IndiConfig,
        nominal: VehicleParams,
        gains: RateGains,
        latency_steps: usize,
    ) -> Self {
        let g = nominal_effectiveness(&nominal);
        let hover = nominal.hover_speed();
        Self {
            cfg,
            nominal,
            gains,
            g,
            speed_est: Vector4::repeat(hover),
            est_ring: VecDeque::new(),
            latency_steps,
            prev_meas: None,
            prev_omega: None,
            filt1: Vector3::zeros(),
            filt2: Vector3::zeros(),
            cs_f1: 0.0,
            cs_f2: 0.0,
            sq_f1: Vector4::zeros(),
            sq_f2: Vector4::zeros(),
            initialized: false,
            saturation_events: 0,
        }
    }

    pub fn effectiveness(&self) -> &Matrix4<f64> {
        &self.g
    }

    /// Number of steps on which any motor command left [0, max^2] before
    /// clamping.
    pub fn saturation_events(&self) -> u64 {
        self.saturation_events
    }

    /// Normalized least-squares step moving G towards the observed
    /// increment relation da = G dy.
    fn adapt(&mut self, dy: &Vector4<f64>, da: &Vector4<f64>) {
        let err = self.g * dy - da;
        let denom = self.cfg.eps + dy.norm_squared();
        self.g -= (self.cfg.mu / denom) * err * dy.transpose();
    }

    /// Pure incremental inversion given explicit measurements: no filter,
    /// no adaptation, no internal motor model.
    pub fn command_from(&mut self, cmd: &HighLevelCommand, inputs: &IndiInputs) -> Vector4<f64> {
        let omega_dot_des = self.gains.k.component_mul(&(cmd.omega_des - inputs.omega));
        let dy = Vector4::new(
            cmd.c_sigma_des - inputs.c_sigma,
            omega_dot_des.x - inputs.omega_dot.x,
            omega_dot_des.y - inputs.omega_dot.y,
            omega_dot_des.z - inputs.omega_dot.z,
        );
        let sq_des = inputs.speed_sq + self.g * dy;
        let max_sq = self.nominal.max_motor_speed * self.nominal.max_motor_speed;
        if sq_des.iter().any(|&s| s < 0.0 || s > max_sq) {
            self.saturation_events += 1;
        }
        sq_des.map(|s| s.clamp(0.0, max_sq).sqrt())
    }

    /// Full INDI step from a delayed observation.
    pub fn command(&mut self, cmd: &HighLevelCommand, obs: &Observation, dt: f64) -> Vector4<f64> {
        // Speed estimate aligned with the delayed observation.
        let speed_delayed = if self.est_ring.len() >= self.latency_steps.max(1) {
            self.est_ring[0]
        } else {
            self.speed_est
        };
        let raw_sq = speed_delayed.component_mul(&speed_delayed);

        if !self.initialized {
            self.cs_f1 = obs.c_sigma;
            self.cs_f2 = obs.c_sigma;
            self.sq_f1 = raw_sq;
            self.sq_f2 = raw_sq;
            self.initialized = true;
        }

        let fd = match self.prev_omega {
            Some(prev) => (obs.omega - prev) / dt,
            None => Vector3::zeros(),
        };
        self.prev_omega = Some(obs.omega);
        let alpha = 1.0 - (-self.cfg.omega_dot_cutoff * dt).exp();
        self.filt1 += alpha * (fd - self.filt1);
        self.filt2 += alpha * (self.filt1 - self.filt2);
        self.cs_f1 += alpha * (obs.c_sigma - self.cs_f1);
        self.cs_f2 += alpha * (self.cs_f1 - self.cs_f2);
        self.sq_f1 += alpha * (raw_sq - self.sq_f1);
        self.sq_f2 += alpha * (self.sq_f1 - self.sq_f2);
        let speed_sq = self.sq_f2;

        // Adapt G on the increment between consecutive measurement pairs.
        let y = Vector4::new(self.cs_f2, self.filt2.x, self.filt2.y, self.filt2.z);
        if let Some((y_prev, sq_prev)) = self.prev_meas {
            self.adapt(&(y - y_prev), &(speed_sq - sq_prev));
        }
        self.prev_meas = Some((y, speed_sq));

        let inputs = IndiInputs {
            c_sigma: self.cs_f2,
            omega: obs.omega,
            omega_dot: self.filt2,
            speed_sq,
        };
        let out = self.command_from(cmd, &inputs);

        // Propagate the internal motor model with the nominal lag and push
        // it into the delay line.
        let decay = (-dt / self.nominal.motor_time_constant).exp();
        self.speed_est = out + (self.speed_est - out) * decay;
        self.est_ring.push_back(self.speed_est);
        while self.est_ring.len() > self.latency_steps.max(1) {
            self.est_ring.pop_front();
        }

        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn nominal_effectiveness_inverts_model_increments() {
        let params = VehicleParams::nominal();
        let g = nominal_effectiveness(&params);
        // A pure collective increment of 1 m/s^2 must raise total squared
        // speed by m/cf while keeping torques untouched: applying the
        // allocation to cf * d(speed^2) recovers [m * dc, J * domega_dot].
        let dy = Vector4::new(1.0, 0.0, 0.0, 0.0);
        let dsq = g * dy;
        let wrench = params.allocation() * (params.thrust_coeff * dsq);
        assert_relative_eq!(wrench[0], params.mass, epsilon = 1e-12);
        for i in 1..4 {
            assert_relative_eq!(wrench[i], 0.0, epsilon = 1e-12);
        }
        let dy = Vector4::new(0.0, 2.0, -1.0, 0.5);
        let wrench = params.allocation() * (params.thrust_coeff * (g * dy));
        assert_relative_eq!(wrench[1], params.inertia.x * 2.0, epsilon = 1e-12);
        assert_relative_eq!(wrench[2], -params.inertia.y, epsilon = 1e-12);
        assert_relative_eq!(wrench[3], params.inertia.z * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn lms_update_identifies_a_perturbed_effectiveness() {
        let params = VehicleParams::nominal();
        let mut indi = IndiAdaptive::new(
            IndiConfig {
                mu: 0.5,
                ..IndiConfig::default()
            },
            params.clone(),
            RateGains::default(),
            3,
        );
        // True effectiveness: motor 0 weakened to 0.8 of nominal. Feeding
        // consistent (dy, da) increments must shrink the G error.
        let g_true = {
            let mut g = nominal_effectiveness(&params);
            let row = 0.8 * g.row(0);
            g.set_row(0, &row);
            g
        };
        let err0 = (indi.g - g_true).norm();
        for i in 0..2000 {
            let t = i as f64;
            let dy = 10.0
                * Vector4::new(
                    (t * 0.37).sin(),
                    (t * 0.73).cos(),
                    (t * 1.19).sin(),
                    (t * 0.51).cos(),
                );
            indi.adapt(&dy, &(g_true * dy));
        }
        let err1 = (indi.g - g_true).norm();
        assert!(
            err1 < 0.05 * err0,
            "LMS failed to identify: {err0} -> {err1}"
        );
    }

    #[test]
    fn saturation_counter_trips_on_impossible_commands() {
        let params = VehicleParams::nominal();
        let mut indi = IndiAdaptive::new(IndiConfig::default(), params, RateGains::default(), 3);
        let cmd = HighLevelCommand {
            c_sigma_des: 1e6,
            omega_des: Vector3::zeros(),
        };
        let inputs = IndiInputs {
            c_sigma: rotorsim::GRAVITY,
            omega: Vector3::zeros(),
            omega_dot: Vector3::zeros(),
            speed_sq: Vector4::repeat(1e4),
        };
        let out = indi.command_from(&cmd, &inputs);
        assert_eq!(indi.saturation_events(), 1);
        for i in 0..4 {
            assert!(out[i] <= indi.nominal.max_motor_speed);
        }
    }
}
