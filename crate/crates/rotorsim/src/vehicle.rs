//! Vehicle parameters, rotor geometry and design-informed randomization.
//!
//! Vehicles are generated from a scalar size factor `c` in `[0, 1]` (or a
//! wider interval for robustness sweeps). Arm length scales linearly with
//! `c`; the remaining parameters follow power laws of the arm length so that
//! small vehicles get small inertia, weak drag and fast motors, and large
//! vehicles the opposite. This keeps the sampled fleet physically plausible
//! in a way independent per-parameter sampling does not.

use nalgebra::{Matrix4, Vector3, Vector4};
use rand::Rng;

use crate::SimError;

/// Standard gravity, m/s^2.
pub const GRAVITY: f64 = 9.81;

/// Lower clamp for the size factor during robustness sweeps.
///
/// Below this value the linearly scaled arm length (and with it mass and
/// inertia) would leave its physical domain for the default training ranges.
pub const SIZE_FACTOR_FLOOR: f64 = -0.25;

/// Minimum ratio of maximum total thrust to weight enforced by the sampler.
///
/// The sampler raises the maximum motor speed when a draw falls below this
/// margin; a vehicle whose motors cannot lift it is not a meaningful
/// benchmark subject for any controller. The value is comparable to the
/// weakest vehicles the scaling laws produce on their own (2.3 to 3.6 at
/// the large ends of the ranges): sampled trajectories routinely demand two
/// to three times gravity at their jerk peaks, so a bare hover margin would
/// leave the floored corner of the range unflyable for every controller,
/// expert included.
pub const THRUST_MARGIN: f64 = 3.0;

/// Closed interval `[min, max]` used by [`ParamRanges`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    /// Linear interpolation; endpoints are exact (`lerp(0) == min`,
    /// `lerp(1) == max`), and `t` outside `[0, 1]` extrapolates.
    pub fn lerp(&self, t: f64) -> f64 {
        self.min * (1.0 - t) + self.max * t
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.width() <= 0.0 {
            self.min
        } else {
            rng.gen_range(self.min..=self.max)
        }
    }

    fn validate(&self, name: &'static str) -> Result<(), SimError> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(SimError::InvalidRange { name, min: self.min, max: self.max });
        }
        Ok(())
    }
}

/// Size factor driving the randomization laws. `0.5` is the nominal vehicle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SizeFactor(pub f64);

impl SizeFactor {
    /// Value clamped to the sweep floor; there is no upper clamp.
    pub fn clamped(&self) -> f64 {
        self.0.max(SIZE_FACTOR_FLOOR)
    }
}

/// Sampling intervals for every randomized vehicle parameter.
///
/// The defaults mirror the benchmark's training and testing tables. Maximum
/// motor speed is listed as `[min, max]` like the others but scales
/// *inversely* with the size factor: small airframes spin fast motors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamRanges {
    /// Vehicle mass, kg.
    pub mass: Range,
    /// Arm length (center to rotor), m.
    pub arm_length: Range,
    /// Mass moment of inertia about body x and y, kg m^2.
    pub mmoi_xy: Range,
    /// Mass moment of inertia about body z, kg m^2.
    pub mmoi_z: Range,
    /// Torque-to-thrust coefficient, m.
    pub torque_to_thrust: Range,
    /// Payload mass as a fraction of vehicle mass (dimensionless).
    pub payload_fraction: Range,
    /// Signed payload offset as a fraction of arm length (dimensionless).
    pub payload_offset_fraction: Range,
    /// Thrust coefficient `C_F` in `F = C_F w^2`, N s^2/rad^2.
    pub thrust_coeff: Range,
    /// Linear body-frame drag coefficient, N s/m.
    pub drag_coeff: Range,
    /// Maximum motor speed, rad/s (inverse scaling, see above).
    pub max_motor_speed: Range,
    /// Per-motor effectiveness factor (dimensionless).
    pub motor_effectiveness: Range,
    /// Motor first-order time constant, s.
    pub motor_time_constant: Range,
}

impl ParamRanges {
    /// Ranges the learned controller is trained on.
    pub fn training() -> Self {
        Self {
            mass: Range::new(0.226, 0.950),
            arm_length: Range::new(0.046, 0.200),
            mmoi_xy: Range::new(1.93e-4, 5.40e-3),
            mmoi_z: Range::new(2.42e-4, 8.51e-3),
            torque_to_thrust: Range::new(0.0069, 0.0161),
            payload_fraction: Range::new(0.18, 0.40),
            payload_offset_fraction: Range::new(-0.50, 0.50),
            thrust_coeff: Range::new(3.88e-8, 8.40e-6),
            drag_coeff: Range::new(0.0, 0.74),
            max_motor_speed: Range::new(800.0, 8044.0),
            motor_effectiveness: Range::new(0.7, 1.3),
            motor_time_constant: Range::new(0.01, 0.01),
        }
    }

    /// Wider ranges used for zero-shot evaluation.
    pub fn testing() -> Self {
        Self {
            mass: Range::new(0.205, 1.841),
            arm_length: Range::new(0.040, 0.220),
            mmoi_xy: Range::new(1.73e-5, 2.27e-2),
            mmoi_z: Range::new(2.10e-4, 3.40e-2),
            torque_to_thrust: Range::new(0.0051, 0.0170),
            payload_fraction: Range::new(0.18, 0.40),
            payload_offset_fraction: Range::new(-0.50, 0.50),
            thrust_coeff: Range::new(3.24e-9, 1.02e-4),
            drag_coeff: Range::new(0.0, 1.15),
            max_motor_speed: Range::new(400.0, 10021.0),
            motor_effectiveness: Range::new(0.7, 1.3),
            motor_time_constant: Range::new(0.01, 0.01),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.mass.validate("mass")?;
        self.arm_length.validate("arm_length")?;
        self.mmoi_xy.validate("mmoi_xy")?;
        self.mmoi_z.validate("mmoi_z")?;
        self.torque_to_thrust.validate("torque_to_thrust")?;
        self.payload_fraction.validate("payload_fraction")?;
        self.payload_offset_fraction.validate("payload_offset_fraction")?;
        self.thrust_coeff.validate("thrust_coeff")?;
        self.drag_coeff.validate("drag_coeff")?;
        self.max_motor_speed.validate("max_motor_speed")?;
        self.motor_effectiveness.validate("motor_effectiveness")?;
        self.motor_time_constant.validate("motor_time_constant")?;
        if self.thrust_coeff.min <= 0.0 {
            return Err(SimError::InvalidRange {
                name: "thrust_coeff",
                min: self.thrust_coeff.min,
                max: self.thrust_coeff.max,
            });
        }
        if self.mass.min <= 0.0 || self.arm_length.min <= 0.0 {
            return Err(SimError::InvalidRange { name: "mass/arm_length", min: 0.0, max: 0.0 });
        }
        Ok(())
    }
}

/// A concrete vehicle instance.
///
/// `mass` is the effective (flying) mass; after a payload event it includes
/// `payload_mass`. Rotors are ordered front-right, back-right, back-left,
/// front-left with spin directions `(+, -, +, -)`; body axes are x forward,
/// y left, z up.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleParams {
    pub mass: f64,
    pub arm_length: f64,
    /// Diagonal of the inertia tensor, kg m^2.
    pub inertia: Vector3<f64>,
    pub torque_to_thrust: f64,
    pub thrust_coeff: f64,
    pub drag_coeff: Vector3<f64>,
    pub max_motor_speed: f64,
    pub motor_time_constant: f64,
    pub motor_effectiveness: Vector4<f64>,
    /// Added payload mass (already folded into `mass`), kg.
    pub payload_mass: f64,
    /// Signed payload offset along body x, m.
    pub payload_offset: f64,
    /// Constant body-frame torque from off-center payload, N m.
    pub external_torque: Vector3<f64>,
    /// Size factor the vehicle was sampled at (diagnostic only).
    pub size_factor: f64,
}

impl VehicleParams {
    /// The nominal model: training ranges at `c = 0.5`, no noise.
    pub fn nominal() -> Self {
        // The RNG is untouched when noise is off; any seed gives the same
        // result.
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        sample_vehicle(&ParamRanges::training(), SizeFactor(0.5), false, &mut rng)
    }

    /// Rotor moment arm `d = l / sqrt(2)` for the X configuration.
    pub fn moment_arm(&self) -> f64 {
        self.arm_length / std::f64::consts::SQRT_2
    }

    /// Allocation matrix `A` mapping per-rotor thrusts to
    /// `[total thrust, tau_x, tau_y, tau_z]`.
    pub fn allocation(&self) -> Matrix4<f64> {
        let d = self.moment_arm();
        let c = self.torque_to_thrust;
        Matrix4::new(
            1.0, 1.0, 1.0, 1.0, //
            -d, -d, d, d, //
            -d, d, d, -d, //
            c, -c, c, -c,
        )
    }

    /// Mixer `M = A^-1`, computed in closed form.
    ///
    /// `A = diag(1, d, d, c_tau) S` with `S` a signed pattern satisfying
    /// `S S^T = 4 I`, so `A^-1 = (S^T / 4) diag(1, 1/d, 1/d, 1/c_tau)`.
    pub fn mixer(&self) -> Matrix4<f64> {
        let d = self.moment_arm();
        let c = self.torque_to_thrust;
        let (qd, qc) = (0.25 / d, 0.25 / c);
        Matrix4::new(
            0.25, -qd, -qd, qc, //
            0.25, -qd, qd, -qc, //
            0.25, qd, qd, qc, //
            0.25, qd, -qd, -qc,
        )
    }

    /// Steady-state motor speed for level hover, rad/s.
    pub fn hover_speed(&self) -> f64 {
        (self.mass * GRAVITY / (4.0 * self.thrust_coeff)).sqrt()
    }

    /// Maximum total thrust over vehicle weight.
    pub fn thrust_to_weight(&self) -> f64 {
        4.0 * self.thrust_coeff * self.max_motor_speed.powi(2) / (self.mass * GRAVITY)
    }

    /// Thrust-to-weight the weakest motor can realize on its corner: an
    /// effectiveness below one caps the realized speed at that fraction of
    /// the limit.
    pub fn realizable_thrust_to_weight(&self) -> f64 {
        let eff = self.motor_effectiveness.min().min(1.0);
        self.thrust_to_weight() * eff * eff
    }

    /// Privileged environment vector `e` (35 entries) used by the teacher
    /// encoder. Layout: mass, arm, c_tau, C_F, J diagonal, drag, max motor
    /// speed, effectiveness, mixer (row-major), payload mass, external
    /// torque.
    pub fn env_vector(&self) -> [f64; 35] {
        let mut e = [0.0; 35];
        e[0] = self.mass;
        e[1] = self.arm_length;
        e[2] = self.torque_to_thrust;
        e[3] = self.thrust_coeff;
        e[4] = self.inertia.x;
        e[5] = self.inertia.y;
        e[6] = self.inertia.z;
        e[7] = self.drag_coeff.x;
        e[8] = self.drag_coeff.y;
        e[9] = self.drag_coeff.z;
        e[10] = self.max_motor_speed;
        for i in 0..4 {
            e[11 + i] = self.motor_effectiveness[i];
        }
        let m = self.mixer();
        for r in 0..4 {
            for c in 0..4 {
                e[15 + 4 * r + c] = m[(r, c)];
            }
        }
        e[31] = self.payload_mass;
        e[32] = self.external_torque.x;
        e[33] = self.external_torque.y;
        e[34] = self.external_torque.z;
        e
    }
}

/// Sample a vehicle at size factor `c` from `ranges`.
///
/// With `noise` enabled every scaled parameter is multiplied by an
/// independent uniform factor in `[0.8, 1.2]` and per-motor effectiveness is
/// drawn from its range; with `noise` off the result is deterministic and
/// the RNG is not consumed (effectiveness is all ones). The sampler clamps
/// the drag coefficient at zero and enforces [`THRUST_MARGIN`], which only
/// binds at extreme size factors.
pub fn sample_vehicle<R: Rng>(
    ranges: &ParamRanges,
    c: SizeFactor,
    noise: bool,
    rng: &mut R,
) -> VehicleParams {
    let cc = c.clamped();

    // Arm length is the master dimension; all power laws are expressed in it.
    let l_raw = ranges.arm_length.lerp(cc).max(1e-3);
    let (l_min, l_max) = (ranges.arm_length.min, ranges.arm_length.max);
    let pow_frac = |p: i32| -> f64 {
        let den = l_max.powi(p) - l_min.powi(p);
        if den.abs() < f64::EPSILON {
            cc
        } else {
            (l_raw.powi(p) - l_min.powi(p)) / den
        }
    };

    let m_raw = ranges.mass.lerp(pow_frac(3));
    let cj = pow_frac(5);
    let jxy_raw = ranges.mmoi_xy.lerp(cj);
    let jz_raw = ranges.mmoi_z.lerp(cj);
    let cd_raw = ranges.drag_coeff.lerp(pow_frac(2));
    let cf_raw = if cc == 1.0 {
        ranges.thrust_coeff.max
    } else {
        let ratio = ranges.thrust_coeff.max / ranges.thrust_coeff.min;
        ranges.thrust_coeff.min * ratio.powf(cc)
    };
    let ctau_raw = ranges.torque_to_thrust.lerp(cc);
    // Inverse scaling: c = 0 is the small, fast-motor end of the range.
    let wmax_raw = ranges.max_motor_speed.lerp(1.0 - cc);
    let tm_raw = ranges.motor_time_constant.lerp(cc.clamp(0.0, 1.0));

    let mut n = |raw: f64| if noise { raw * rng.gen_range(0.8..=1.2) } else { raw };
    let l = n(l_raw);
    let mass = n(m_raw).max(1e-3);
    let jx = n(jxy_raw).max(1e-9);
    let jy = n(jxy_raw).max(1e-9);
    let jz = n(jz_raw).max(1e-9);
    let ctau = n(ctau_raw).max(1e-5);
    let cf = n(cf_raw).max(1e-12);
    let cd = Vector3::new(n(cd_raw).max(0.0), n(cd_raw).max(0.0), n(cd_raw).max(0.0));
    let mut wmax = n(wmax_raw);
    let tm = n(tm_raw).max(1e-4);

    let effectiveness = if noise {
        Vector4::from_fn(|_, _| ranges.motor_effectiveness.sample(rng))
    } else {
        Vector4::repeat(1.0)
    };

    // Feasibility floor: motors must be able to lift the vehicle with
    // margin. A motor with effectiveness below one tops out at a realized
    // speed of eff * wmax, so the weakest motor sets the floor.
    let min_eff = effectiveness.min().min(1.0);
    let wmax_floor = (THRUST_MARGIN * mass * GRAVITY / (4.0 * cf)).sqrt() / min_eff;
    wmax = wmax.max(wmax_floor);

    VehicleParams {
        mass,
        arm_length: l.max(1e-3),
        inertia: Vector3::new(jx, jy, jz),
        torque_to_thrust: ctau,
        thrust_coeff: cf,
        drag_coeff: cd,
        max_motor_speed: wmax,
        motor_time_constant: tm,
        motor_effectiveness: effectiveness,
        payload_mass: 0.0,
        payload_offset: 0.0,
        external_torque: Vector3::zeros(),
        size_factor: cc,
    }
}

/// Attach a randomly drawn off-center payload to `params`.
///
/// The payload mass (a fraction of the current vehicle mass) is folded into
/// the effective mass, the inertia picks up the parallel-axis terms for a
/// point mass on the body x axis, and the payload weight times its lever arm
/// becomes a constant body-frame pitch torque.
pub fn sample_disturbance<R: Rng>(
    params: &VehicleParams,
    ranges: &ParamRanges,
    rng: &mut R,
) -> VehicleParams {
    let mut p = params.clone();
    let payload = ranges.payload_fraction.sample(rng) * params.mass;
    let offset = ranges.payload_offset_fraction.sample(rng) * params.arm_length;
    p.mass += payload;
    p.payload_mass += payload;
    p.payload_offset = offset;
    p.inertia.y += payload * offset * offset;
    p.inertia.z += payload * offset * offset;
    p.external_torque += Vector3::new(0.0, payload * GRAVITY * offset, 0.0);
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nominal_matches_closed_forms() {
        let p = VehicleParams::nominal();
        assert_relative_eq!(p.arm_length, 0.123, epsilon = 1e-12);
        assert_relative_eq!(p.mass, 0.3875652, epsilon = 1e-4);
        assert_relative_eq!(p.thrust_coeff, 5.70894e-7, epsilon = 1e-11);
        assert_eq!(p.motor_effectiveness, Vector4::repeat(1.0));
        assert_eq!(p.payload_mass, 0.0);
    }

    #[test]
    fn endpoints_hit_range_extrema_exactly() {
        let r = ParamRanges::training();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lo = sample_vehicle(&r, SizeFactor(0.0), false, &mut rng);
        let hi = sample_vehicle(&r, SizeFactor(1.0), false, &mut rng);
        assert_eq!(lo.arm_length, r.arm_length.min);
        assert_eq!(hi.arm_length, r.arm_length.max);
        assert_eq!(lo.mass, r.mass.min);
        assert_eq!(hi.mass, r.mass.max);
        assert_eq!(lo.thrust_coeff, r.thrust_coeff.min);
        assert_eq!(hi.thrust_coeff, r.thrust_coeff.max);
        assert_eq!(lo.max_motor_speed, r.max_motor_speed.max);
        assert_eq!(lo.torque_to_thrust, r.torque_to_thrust.min);
        assert_eq!(hi.torque_to_thrust, r.torque_to_thrust.max);
        // The inverse motor-speed law bottoms out below the feasibility
        // floor at c = 1, so that endpoint lands on the floor instead.
        let floor = (THRUST_MARGIN * hi.mass * GRAVITY / (4.0 * hi.thrust_coeff)).sqrt();
        assert!(floor > r.max_motor_speed.min);
        assert_eq!(hi.max_motor_speed, floor);
    }

    #[test]
    fn mixer_inverts_allocation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let c = rng.gen_range(0.0..=1.0);
            let p = sample_vehicle(&ParamRanges::training(), SizeFactor(c), true, &mut rng);
            let prod = p.allocation() * p.mixer();
            let err = (prod - Matrix4::identity()).abs().max();
            assert!(err < 1e-10, "A*M deviates from identity by {err}");
        }
    }

    #[test]
    fn hover_forces_balance_weight() {
        let p = VehicleParams::nominal();
        let w = p.hover_speed();
        let thrust = 4.0 * p.thrust_coeff * w * w;
        assert_relative_eq!(thrust, p.mass * GRAVITY, epsilon = 1e-9);
    }

    #[test]
    fn disturbance_example_torque() {
        let mut p = VehicleParams::nominal();
        p.mass = 1.0;
        // Force the draw to payload 0.2 at +0.05 by pinning the ranges.
        let mut r = ParamRanges::training();
        r.payload_fraction = Range::new(0.2, 0.2);
        r.payload_offset_fraction = Range::new(0.05 / p.arm_length, 0.05 / p.arm_length);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = sample_disturbance(&p, &r, &mut rng);
        assert_relative_eq!(d.external_torque.y, 0.2 * GRAVITY * 0.05, epsilon = 1e-9);
        assert_relative_eq!(d.mass, 1.2, epsilon = 1e-12);
        assert_relative_eq!(d.payload_mass, 0.2, epsilon = 1e-12);
        assert_relative_eq!(d.inertia.y - p.inertia.y, 0.2 * 0.05 * 0.05, epsilon = 1e-9);
    }

    #[test]
    fn env_vector_distinguishes_parameters() {
        let a = VehicleParams::nominal();
        let mut b = a.clone();
        b.drag_coeff.y += 0.01;
        assert_ne!(a.env_vector(), b.env_vector());
        let mut c = a.clone();
        c.motor_effectiveness[2] = 0.9;
        assert_ne!(a.env_vector(), c.env_vector());
        assert_eq!(a.env_vector(), a.clone().env_vector());
    }

    #[test]
    fn sweep_floor_keeps_vehicles_physical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..200 {
            let c = -7.5 + i as f64 * 0.08; // spans the delta = 8 sweep
            let p = sample_vehicle(&ParamRanges::training(), SizeFactor(c), true, &mut rng);
            assert!(p.mass > 0.0 && p.arm_length > 0.0);
            assert!(p.inertia.min() > 0.0);
            assert!(p.drag_coeff.min() >= 0.0);
            assert!(p.realizable_thrust_to_weight() >= THRUST_MARGIN - 1e-9);
        }
    }
}
