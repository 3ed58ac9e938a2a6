//! Feature construction and normalization for the learned controller.
//!
//! The policy state is built from quantities a real low-level loop can
//! measure: mass-normalized collective thrust, body rates, and the current
//! high-level command. Normalization of that state is analytic (gravity and
//! the body-rate termination limit set the scales) so it transfers across
//! vehicles; the privileged environment vector spans several orders of
//! magnitude across the randomization ranges, so its normalizer is fitted
//! empirically once and then frozen.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rotorctl::HighLevelCommand;
use rotornn::AffineNormalizer;
use rotorsim::{
    sample_disturbance, sample_vehicle, Observation, ParamRanges, RefSample, SizeFactor, GRAVITY,
};

/// Policy state width: measured collective thrust and body rate plus the
/// commanded pair.
pub const X_DIM: usize = 8;
/// Motor-speed action width.
pub const ACT_DIM: usize = 4;
/// Latent environment embedding width.
pub const Z_DIM: usize = 8;
/// Privileged environment vector width.
pub const ENV_DIM: usize = 35;
/// History length consumed by the temporal-convolution encoder.
pub const HIST_LEN: usize = 100;
/// Features per history step: normalized state plus normalized action.
pub const HIST_FEAT: usize = X_DIM + ACT_DIM;
/// State width of the end-to-end ablation: measured thrust and body rate
/// plus raw position, velocity, and goal offset instead of a command.
pub const E2E_X_DIM: usize = 13;

/// Raw (unnormalized) policy state for the cascaded controller:
/// `[c_sigma, omega, c_sigma_des, omega_des]`.
pub fn raw_state(obs: &Observation, cmd: &HighLevelCommand) -> DVector<f64> {
    DVector::from_column_slice(&[
        obs.c_sigma,
        obs.omega.x,
        obs.omega.y,
        obs.omega.z,
        cmd.c_sigma_des,
        cmd.omega_des.x,
        cmd.omega_des.y,
        cmd.omega_des.z,
    ])
}

/// Analytic normalizer for [`raw_state`]: thrust channels are centered at
/// gravity and scaled by it, rate channels are scaled by the 10 rad/s
/// termination limit.
pub fn x_normalizer() -> AffineNormalizer {
    let mean = DVector::from_column_slice(&[GRAVITY, 0.0, 0.0, 0.0, GRAVITY, 0.0, 0.0, 0.0]);
    let std = DVector::from_column_slice(&[GRAVITY, 10.0, 10.0, 10.0, GRAVITY, 10.0, 10.0, 10.0]);
    AffineNormalizer::new(mean, std)
}

/// Raw state for the end-to-end ablation, which replaces the high-level
/// command with position, velocity, and the offset to the current goal.
pub fn e2e_raw_state(obs: &Observation, goal: &RefSample) -> DVector<f64> {
    let diff = goal.pos - obs.pos;
    DVector::from_column_slice(&[
        obs.c_sigma,
        obs.omega.x,
        obs.omega.y,
        obs.omega.z,
        obs.pos.x,
        obs.pos.y,
        obs.pos.z,
        obs.vel.x,
        obs.vel.y,
        obs.vel.z,
        diff.x,
        diff.y,
        diff.z,
    ])
}

/// Analytic normalizer for [`e2e_raw_state`]; translation channels are
/// scaled by 5 (the trajectory sampler keeps positions within a couple of
/// meters and speeds within a couple of m/s).
pub fn e2e_normalizer() -> AffineNormalizer {
    let mut mean = DVector::zeros(E2E_X_DIM);
    mean[0] = GRAVITY;
    let mut std = DVector::repeat(E2E_X_DIM, 5.0);
    std[0] = GRAVITY;
    std[1] = 10.0;
    std[2] = 10.0;
    std[3] = 10.0;
    AffineNormalizer::new(mean, std)
}

/// Fit the privileged-vector normalizer over `n` vehicles drawn across the
/// whole size-factor range with parameter noise on; half the draws carry a
/// payload disturbance so those entries see nonzero variance. The seed is
/// fixed by the caller and the result is frozen into the checkpoint.
pub fn fit_env_normalizer(ranges: &ParamRanges, n: usize, seed: u64) -> AffineNormalizer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let c = SizeFactor(i as f64 / (n - 1).max(1) as f64);
        let mut params = sample_vehicle(ranges, c, true, &mut rng);
        if i % 2 == 1 {
            params = sample_disturbance(&params, ranges, &mut rng);
        }
        samples.push(params.env_vector().to_vec());
    }
    AffineNormalizer::fit(&samples, ENV_DIM)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    #[test]
    fn hover_state_normalizes_to_zero() {
        let obs = Observation {
            t: 0.0,
            pos: Vector3::zeros(),
            vel: Vector3::zeros(),
            att: nalgebra::UnitQuaternion::identity(),
            omega: Vector3::zeros(),
            c_sigma: GRAVITY,
        };
        let cmd = HighLevelCommand::hover(GRAVITY);
        let x = x_normalizer().normalize(&raw_state(&obs, &cmd));
        assert_relative_eq!(x.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn state_channels_scale_as_documented() {
        let obs = Observation {
            t: 0.0,
            pos: Vector3::zeros(),
            vel: Vector3::zeros(),
            att: nalgebra::UnitQuaternion::identity(),
            omega: Vector3::new(5.0, -10.0, 2.5),
            c_sigma: 2.0 * GRAVITY,
        };
        let cmd = HighLevelCommand {
            c_sigma_des: 0.0,
            omega_des: Vector3::new(1.0, 0.0, 0.0),
        };
        let x = x_normalizer().normalize(&raw_state(&obs, &cmd));
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 0.5, epsilon = 1e-12);
        assert_relative_eq!(x[2], -1.0, epsilon = 1e-12);
        assert_relative_eq!(x[4], -1.0, epsilon = 1e-12);
        assert_relative_eq!(x[5], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn env_normalizer_is_reproducible_and_full_width() {
        let ranges = ParamRanges::training();
        let a = fit_env_normalizer(&ranges, 256, 99);
        let b = fit_env_normalizer(&ranges, 256, 99);
        assert_eq!(a, b);
        assert_eq!(a.dim(), ENV_DIM);
        // Payload-related entries must have seen variation.
        assert!(a.std[31] > 1e-6);
        assert!(a.std[33] > 1e-6);
    }
}
