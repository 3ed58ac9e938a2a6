//! High-level position loop: PID on position and velocity, followed by a
//! tilt-prioritized attitude map from desired acceleration to body rates.

use nalgebra::{UnitQuaternion, Vector3};
use rotorsim::{Observation, RefSample};

use crate::HighLevelCommand;

/// Gains for the high-level loop.
#[derive(Debug, Clone, Copy)]
pub struct HighLevelGains {
    /// Natural frequency of the position error dynamics in rad/s.
    pub natural_freq: f64,
    /// Damping ratio of the position error dynamics.
    pub damping: f64,
    /// Time constant turning the tilt error angle into a body rate, s.
    pub attitude_tc: f64,
    /// Time constant for the yaw error, s.
    pub yaw_tc: f64,
    pub gravity: f64,
}

impl Default for HighLevelGains {
    fn default() -> Self {
        Self {
            natural_freq: 2.0,
            damping: 0.7,
            attitude_tc: 0.2,
            yaw_tc: 0.2,
            gravity: rotorsim::GRAVITY,
        }
    }
}

/// Full desired attitude from a world-frame thrust direction and a heading.
///
/// The desired body x axis is the heading vector projected onto the plane
/// normal to the thrust direction. When the two are parallel the heading is
/// unconstrained and the world y axis stands in.
pub fn attitude_from_thrust_yaw(z_des_world: &Vector3<f64>, yaw_des: f64) -> UnitQuaternion<f64> {
    let z = z_des_world.normalize();
    let heading = Vector3::new(yaw_des.cos(), yaw_des.sin(), 0.0);
    let mut y = z.cross(&heading);
    let n = y.norm();
    if n < 1e-6 {
        y = z.cross(&Vector3::y()).normalize();
    } else {
        y /= n;
    }
    let x = y.cross(&z);
    UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(
        nalgebra::Matrix3::from_columns(&[x, y, z]),
    ))
}

/// Body rates that reduce the tilt error between the current attitude and a
/// desired world-frame thrust direction, with the yaw error handled
/// separately about the body z axis.
///
/// The tilt error is the axis-angle rotation taking the body z axis onto
/// the desired direction, expressed in the body frame; dividing it by a
/// time constant yields a rate command whose z component is exactly zero,
/// so yaw control never steals rotor authority from tilt. The yaw error is
/// the twist of the full attitude error about the body z axis, which stays
/// well defined at any tilt (an Euler-angle yaw would flip sign near
/// ninety degrees of pitch and command violent spins).
pub fn tilt_yaw_rates(
    att: &UnitQuaternion<f64>,
    z_des_world: &Vector3<f64>,
    yaw_des: f64,
    attitude_tc: f64,
    yaw_tc: f64,
) -> Vector3<f64> {
    let z_body = att.inverse_transform_vector(z_des_world);
    let ez = Vector3::z();
    let cross = ez.cross(&z_body);
    let sin = cross.norm();
    let cos = ez.dot(&z_body).clamp(-1.0, 1.0);
    let angle = sin.atan2(cos);
    let axis = if sin > 1e-9 {
        cross / sin
    } else if cos < 0.0 {
        // Pointing exactly opposite: any horizontal axis works.
        Vector3::x()
    } else {
        Vector3::zeros()
    };
    let mut omega = axis * (angle / attitude_tc);

    let q_err = att.inverse() * attitude_from_thrust_yaw(z_des_world, yaw_des);
    let (w, k) = (q_err.w, q_err.k);
    if w * w + k * k > 1e-12 {
        // Twist angle about z; the double cover lands in (-2pi, 2pi], so
        // wrap back into (-pi, pi].
        omega.z += wrap_angle(2.0 * k.atan2(w)) / yaw_tc;
    }
    omega
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut x = a % two_pi;
    if x > std::f64::consts::PI {
        x -= two_pi;
    } else if x < -std::f64::consts::PI {
        x += two_pi;
    }
    x
}

/// PID position loop producing collective thrust and desired body rates.
///
/// The desired acceleration is the reference acceleration plus PD feedback
/// on position and velocity error; adding gravity gives the desired
/// mass-normalized thrust vector, whose norm is the collective command and
/// whose direction feeds the tilt map. The reference yaw is zero.
pub struct HighLevelPid {
    gains: HighLevelGains,
    last: HighLevelCommand,
    /// Known drag coefficient and mass for feedforward, if entitled to them.
    drag_ff: Option<(Vector3<f64>, f64)>,
}

impl HighLevelPid {
    pub fn new(gains: HighLevelGains) -> Self {
        let last = HighLevelCommand::hover(gains.gravity);
        Self {
            gains,
            last,
            drag_ff: None,
        }
    }

    /// Position loop that additionally compensates the vehicle's linear body
    /// drag using the true parameters. Only the expert variant is entitled
    /// to this; every other controller works from the nominal model, where
    /// unknown drag is part of what adaptation has to absorb.
    pub fn with_drag_feedforward(gains: HighLevelGains, params: &rotorsim::VehicleParams) -> Self {
        let mut pid = Self::new(gains);
        pid.set_drag_feedforward(params);
        pid
    }

    /// Refresh the feedforward model after a plant change.
    pub fn set_drag_feedforward(&mut self, params: &rotorsim::VehicleParams) {
        self.drag_ff = Some((params.drag_coeff, params.mass));
    }

    /// Desired world-frame acceleration from the position/velocity feedback.
    pub fn accel_des(&self, obs: &Observation, r: &RefSample) -> Vector3<f64> {
        let g = &self.gains;
        let kp = g.natural_freq * g.natural_freq;
        let kv = 2.0 * g.damping * g.natural_freq;
        r.acc + kv * (r.vel - obs.vel) + kp * (r.pos - obs.pos)
    }

    pub fn update(&mut self, obs: &Observation, r: &RefSample) -> HighLevelCommand {
        let mut accel = self.accel_des(obs, r);
        if let Some((cd, mass)) = &self.drag_ff {
            // Cancel the body-frame drag force the plant will apply at the
            // measured velocity.
            let v_body = obs.att.inverse_transform_vector(&obs.vel);
            accel += obs.att.transform_vector(&cd.component_mul(&v_body)) / *mass;
        }
        let thrust = accel + Vector3::new(0.0, 0.0, self.gains.gravity);
        let norm = thrust.norm();
        if norm < 1e-6 {
            // Free-fall singularity: direction undefined, hold the previous
            // command for this tick.
            return self.last;
        }
        let omega_des = tilt_yaw_rates(
            &obs.att,
            &(thrust / norm),
            0.0,
            self.gains.attitude_tc,
            self.gains.yaw_tc,
        );
        self.last = HighLevelCommand {
            c_sigma_des: norm,
            omega_des,
        };
        self.last
    }

    pub fn gains(&self) -> &HighLevelGains {
        &self.gains
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::Unit;

    fn hover_obs() -> Observation {
        Observation {
            t: 0.0,
            pos: Vector3::zeros(),
            vel: Vector3::zeros(),
            att: UnitQuaternion::identity(),
            omega: Vector3::zeros(),
            c_sigma: rotorsim::GRAVITY,
        }
    }

    #[test]
    fn hover_with_small_height_error_raises_thrust() {
        let mut pid = HighLevelPid::new(HighLevelGains::default());
        let obs = hover_obs();
        let mut r = RefSample::hover(Vector3::zeros());
        r.pos.z = 0.1;
        let cmd = pid.update(&obs, &r);
        // kp = 4, so 0.1 m of height error asks for 0.4 m/s^2 on top of g.
        assert_relative_eq!(cmd.c_sigma_des, 9.81 + 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(cmd.omega_des.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lateral_error_requests_tilt_without_yaw() {
        let mut pid = HighLevelPid::new(HighLevelGains::default());
        let obs = hover_obs();
        let mut r = RefSample::hover(Vector3::zeros());
        r.pos.x = 1.0;
        let cmd = pid.update(&obs, &r);
        // Desired thrust tips towards +x, so the vehicle should pitch about
        // +y (right-hand rule takes z towards x) and not yaw or roll.
        assert!(cmd.omega_des.y > 0.1);
        assert_abs_diff_eq!(cmd.omega_des.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cmd.omega_des.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn drag_feedforward_leans_into_the_wind() {
        let mut params = rotorsim::VehicleParams::nominal();
        params.drag_coeff = Vector3::new(0.5, 0.5, 0.3);
        let mut plain = HighLevelPid::new(HighLevelGains::default());
        let mut ff = HighLevelPid::with_drag_feedforward(HighLevelGains::default(), &params);

        // Cruising at the reference velocity: pure feedback sees no error,
        // while the feedforward knows drag will decelerate the vehicle and
        // asks for the extra acceleration up front.
        let mut obs = hover_obs();
        obs.vel = Vector3::new(2.0, 0.0, 0.0);
        let mut r = RefSample::hover(Vector3::zeros());
        r.vel = obs.vel;

        let cmd_plain = plain.update(&obs, &r);
        let cmd_ff = ff.update(&obs, &r);
        assert_abs_diff_eq!(cmd_plain.omega_des.norm(), 0.0, epsilon = 1e-12);
        let expect = params.drag_coeff.x * obs.vel.x / params.mass;
        assert_relative_eq!(
            cmd_ff.c_sigma_des,
            (expect * expect + 9.81 * 9.81).sqrt(),
            epsilon = 1e-12
        );
        assert!(cmd_ff.omega_des.y > 0.0, "must pitch towards +x");
    }

    #[test]
    fn yaw_error_maps_to_body_z_rate_only() {
        let obs = Observation {
            att: UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vector3::z()), 0.5),
            ..hover_obs()
        };
        let rates = tilt_yaw_rates(&obs.att, &Vector3::z(), 0.0, 0.2, 0.2);
        assert_abs_diff_eq!(rates.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rates.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(rates.z, -0.5 / 0.2, epsilon = 1e-9);
    }

    #[test]
    fn tilt_rate_z_component_is_zero() {
        let att = UnitQuaternion::from_euler_angles(0.3, -0.2, 0.9);
        let dir = Vector3::new(0.3, -0.5, 0.8).normalize();
        let rates = tilt_yaw_rates(&att, &dir, 0.0, 0.2, f64::INFINITY);
        assert_abs_diff_eq!(rates.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn upside_down_still_produces_a_rate() {
        let att = UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vector3::x()), std::f64::consts::PI);
        let rates = tilt_yaw_rates(&att, &Vector3::z(), 0.0, 0.2, 0.2);
        assert!(rates.norm() > 1.0, "opposite-direction guard must engage");
    }
}
