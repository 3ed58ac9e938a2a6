//! Low-level PD rate loop and the shared force-to-speed conversion.

use nalgebra::{Vector3, Vector4};
use rotorsim::{Observation, VehicleParams};

use crate::HighLevelCommand;

/// Proportional gains of the body-rate loop, 1/s.
#[derive(Debug, Clone, Copy)]
pub struct RateGains {
    pub k: Vector3<f64>,
}

impl Default for RateGains {
    fn default() -> Self {
        // Roll/pitch respond in 50 ms, yaw in 250 ms.
        Self {
            k: Vector3::new(20.0, 20.0, 4.0),
        }
    }
}

/// Per-rotor thrusts realizing a high-level command under the given
/// parameter belief, together with the desired body torque.
///
/// The torque command inverts the rotational dynamics around the desired
/// rate derivative `K (omega_des - omega)`, including the gyroscopic term.
/// If the belief carries a known external torque (the expert's does after a
/// disturbance) it is cancelled by feedforward.
pub fn rate_pd_forces(
    cmd: &HighLevelCommand,
    omega: &Vector3<f64>,
    params: &VehicleParams,
    gains: &RateGains,
) -> (Vector4<f64>, Vector3<f64>) {
    let omega_dot_des = gains.k.component_mul(&(cmd.omega_des - omega));
    let j = &params.inertia;
    let tau = j.component_mul(&omega_dot_des) + omega.cross(&j.component_mul(omega))
        - params.external_torque;
    let wrench = Vector4::new(params.mass * cmd.c_sigma_des, tau.x, tau.y, tau.z);
    (params.mixer() * wrench, tau)
}

/// Motor speed commands producing the requested per-rotor thrusts.
///
/// Negative thrust requests clamp to zero (rotors cannot reverse), and the
/// result is divided by the believed per-motor effectiveness before being
/// clamped to the believed speed limit.
pub fn speeds_from_forces(forces: &Vector4<f64>, params: &VehicleParams) -> Vector4<f64> {
    forces.zip_map(&params.motor_effectiveness, |f, eff| {
        ((f.max(0.0) / params.thrust_coeff).sqrt() / eff).clamp(0.0, params.max_motor_speed)
    })
}

/// Stateless PD low-level loop: rate PD, mixer, thrust map.
#[derive(Debug, Clone, Default)]
pub struct LowLevelPd {
    pub gains: RateGains,
}

impl LowLevelPd {
    pub fn new(gains: RateGains) -> Self {
        Self { gains }
    }

    pub fn command(
        &self,
        cmd: &HighLevelCommand,
        obs: &Observation,
        params: &VehicleParams,
    ) -> Vector4<f64> {
        let (forces, _) = rate_pd_forces(cmd, &obs.omega, params, &self.gains);
        speeds_from_forces(&forces, params)
    }
}
