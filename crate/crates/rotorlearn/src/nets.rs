//! The network bundle trained by the two-phase pipeline.
//!
//! Four modules share one checkpoint: the policy head, the value head, the
//! privileged environment encoder, and the history encoder. The policy and
//! value heads both consume the concatenation of the normalized state and
//! the latent produced by the environment encoder, so during phase one the
//! encoder receives gradients from both objectives.

use nalgebra::{DVector, Vector4};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

use rotornn::{
    sigmoid, Activation, AffineNormalizer, Checkpoint, CheckpointError, ConvEncoder, Mlp,
    Parameterized,
};

use crate::features::{e2e_normalizer, x_normalizer, ACT_DIM, E2E_X_DIM, ENV_DIM, X_DIM, Z_DIM};

/// Policy, value, privileged encoder, history encoder, and the frozen
/// normalization constants, bundled for training and checkpointing.
#[derive(Debug, Clone)]
pub struct PolicyNets {
    pub pi: Mlp,
    pub value: Mlp,
    pub mu: Mlp,
    pub phi: ConvEncoder,
    /// State-independent log standard deviation of the pre-squash action
    /// distribution, one entry per motor.
    pub log_std: DVector<f64>,
    pub x_norm: AffineNormalizer,
    pub e_norm: AffineNormalizer,
    x_dim: usize,
}

impl PolicyNets {
    fn build(x_dim: usize, x_norm: AffineNormalizer, e_norm: AffineNormalizer, rng: &mut impl Rng) -> Self {
        let input = x_dim + Z_DIM;
        let mut pi = Mlp::new(&[input, 256, 256, ACT_DIM], Activation::Linear, rng);
        // Start the action head near the sigmoid midpoint so early actions
        // hover around half throttle instead of saturating the motors.
        pi.layers.last_mut().expect("pi layers").scale_init(0.01);
        let value = Mlp::new(&[input, 256, 256, 1], Activation::Linear, rng);
        let mu = Mlp::new(&[ENV_DIM, 128, Z_DIM], Activation::Linear, rng);
        let phi = ConvEncoder::standard(rng);
        Self {
            pi,
            value,
            mu,
            phi,
            log_std: DVector::repeat(ACT_DIM, -1.0),
            x_norm,
            e_norm,
            x_dim,
        }
    }

    /// Standard cascaded-input bundle.
    pub fn new(e_norm: AffineNormalizer, rng: &mut impl Rng) -> Self {
        assert_eq!(e_norm.dim(), ENV_DIM);
        Self::build(X_DIM, x_normalizer(), e_norm, rng)
    }

    /// End-to-end ablation bundle: wider state, no high-level command.
    pub fn new_end_to_end(e_norm: AffineNormalizer, rng: &mut impl Rng) -> Self {
        assert_eq!(e_norm.dim(), ENV_DIM);
        Self::build(E2E_X_DIM, e2e_normalizer(), e_norm, rng)
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn is_end_to_end(&self) -> bool {
        self.x_dim == E2E_X_DIM
    }

    /// Concatenate normalized state and latent into the policy/value input.
    pub fn policy_input(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.x_dim);
        assert_eq!(z.len(), Z_DIM);
        let mut v = DVector::zeros(self.x_dim + Z_DIM);
        v.rows_mut(0, self.x_dim).copy_from(x);
        v.rows_mut(self.x_dim, Z_DIM).copy_from(z);
        v
    }

    /// Deterministic pre-squash action mean.
    pub fn mean_action(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        self.pi.infer(&self.policy_input(x, z))
    }

    /// Privileged latent from a raw environment vector.
    pub fn teacher_latent(&self, e_raw: &DVector<f64>) -> DVector<f64> {
        self.mu.infer(&self.e_norm.normalize(e_raw))
    }

    /// Map a pre-squash action to the unit interval per motor.
    pub fn action_norm(y: &DVector<f64>) -> Vector4<f64> {
        Vector4::from_fn(|i, _| sigmoid(y[i]))
    }

    /// Map a pre-squash action to motor speeds for a vehicle with the given
    /// speed limit.
    pub fn speeds(y: &DVector<f64>, max_motor_speed: f64) -> Vector4<f64> {
        Self::action_norm(y) * max_motor_speed
    }

    /// Number of parameters updated during phase one (policy, value,
    /// privileged encoder, log std). The history encoder trains in phase
    /// two only.
    pub fn phase1_param_count(&self) -> usize {
        self.pi.param_count() + self.value.param_count() + self.mu.param_count() + ACT_DIM
    }

    pub fn phase1_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.phase1_param_count());
        self.pi.export_params(&mut out);
        self.value.export_params(&mut out);
        self.mu.export_params(&mut out);
        out.extend(self.log_std.iter());
        out
    }

    /// Gradients in the same layout as [`Self::phase1_params`]; the log-std
    /// gradient is tracked by the caller and appended here.
    pub fn phase1_grads(&self, log_std_grad: &[f64]) -> Vec<f64> {
        assert_eq!(log_std_grad.len(), ACT_DIM);
        let mut out = Vec::with_capacity(self.phase1_param_count());
        self.pi.export_grads(&mut out);
        self.value.export_grads(&mut out);
        self.mu.export_grads(&mut out);
        out.extend_from_slice(log_std_grad);
        out
    }

    pub fn set_phase1_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.phase1_param_count());
        let mut off = 0;
        self.pi.import_params(flat, &mut off);
        self.value.import_params(flat, &mut off);
        self.mu.import_params(flat, &mut off);
        for i in 0..ACT_DIM {
            self.log_std[i] = flat[off + i];
        }
    }

    pub fn zero_phase1_grads(&mut self) {
        self.pi.zero_grad();
        self.value.zero_grad();
        self.mu.zero_grad();
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.push("meta", vec![self.x_dim as f64]);
        let mut flat = Vec::new();
        self.pi.export_params(&mut flat);
        ck.push("pi", std::mem::take(&mut flat));
        self.value.export_params(&mut flat);
        ck.push("value", std::mem::take(&mut flat));
        self.mu.export_params(&mut flat);
        ck.push("mu", std::mem::take(&mut flat));
        self.phi.export_params(&mut flat);
        ck.push("phi", std::mem::take(&mut flat));
        ck.push("log_std", self.log_std.iter().copied().collect());
        ck.push("x_norm.mean", self.x_norm.mean.iter().copied().collect());
        ck.push("x_norm.std", self.x_norm.std.iter().copied().collect());
        ck.push("e_norm.mean", self.e_norm.mean.iter().copied().collect());
        ck.push("e_norm.std", self.e_norm.std.iter().copied().collect());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, CheckpointError> {
        let meta = ck.require("meta", 1)?;
        let x_dim = meta[0] as usize;
        if x_dim != X_DIM && x_dim != E2E_X_DIM {
            return Err(CheckpointError::ShapeMismatch {
                name: "meta".into(),
                expected: X_DIM,
                got: x_dim,
            });
        }
        // Architecture is fixed; weights are overwritten below.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut nets = Self::build(
            x_dim,
            AffineNormalizer::identity(x_dim),
            AffineNormalizer::identity(ENV_DIM),
            &mut rng,
        );

        let mut off = 0;
        nets.pi
            .import_params(ck.require("pi", nets.pi.param_count())?, &mut off);
        off = 0;
        nets.value
            .import_params(ck.require("value", nets.value.param_count())?, &mut off);
        off = 0;
        nets.mu
            .import_params(ck.require("mu", nets.mu.param_count())?, &mut off);
        off = 0;
        nets.phi
            .import_params(ck.require("phi", nets.phi.param_count())?, &mut off);
        let ls = ck.require("log_std", ACT_DIM)?;
        nets.log_std = DVector::from_column_slice(ls);
        nets.x_norm = AffineNormalizer::new(
            DVector::from_column_slice(ck.require("x_norm.mean", x_dim)?),
            DVector::from_column_slice(ck.require("x_norm.std", x_dim)?),
        );
        nets.e_norm = AffineNormalizer::new(
            DVector::from_column_slice(ck.require("e_norm.mean", ENV_DIM)?),
            DVector::from_column_slice(ck.require("e_norm.std", ENV_DIM)?),
        );
        Ok(nets)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::fit_env_normalizer;
    use approx::assert_relative_eq;
    use rotorsim::ParamRanges;

    fn small_e_norm() -> AffineNormalizer {
        fit_env_normalizer(&ParamRanges::training(), 64, 7)
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let nets = PolicyNets::new(small_e_norm(), &mut rng);
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("nets.ckpt");
        nets.save(&path).expect("save");
        let loaded = PolicyNets::load(&path).expect("load");

        assert_eq!(nets.x_dim(), loaded.x_dim());
        assert_eq!(nets.phase1_params(), loaded.phase1_params());
        let mut a = Vec::new();
        let mut b = Vec::new();
        nets.phi.export_params(&mut a);
        loaded.phi.export_params(&mut b);
        assert_eq!(a, b);
        assert_eq!(nets.x_norm, loaded.x_norm);
        assert_eq!(nets.e_norm, loaded.e_norm);

        // Same input, same output, bit for bit.
        let x = DVector::from_fn(X_DIM, |i, _| (i as f64 * 0.37).sin());
        let z = DVector::from_fn(Z_DIM, |i, _| (i as f64 * 0.61).cos());
        let ya = nets.mean_action(&x, &z);
        let yb = loaded.mean_action(&x, &z);
        assert_eq!(ya, yb);
    }

    #[test]
    fn action_head_starts_near_half_throttle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let nets = PolicyNets::new(small_e_norm(), &mut rng);
        let x = DVector::from_fn(X_DIM, |i, _| (i as f64 * 0.5).sin());
        let z = DVector::from_fn(Z_DIM, |i, _| (i as f64 * 0.3).cos());
        let y = nets.mean_action(&x, &z);
        let a = PolicyNets::action_norm(&y);
        for i in 0..ACT_DIM {
            assert_relative_eq!(a[i], 0.5, epsilon = 0.02);
        }
        let speeds = PolicyNets::speeds(&y, 2000.0);
        assert!(speeds.iter().all(|s| (900.0..1100.0).contains(s)));
    }

    #[test]
    fn phase1_param_vector_roundtrips() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut nets = PolicyNets::new(small_e_norm(), &mut rng);
        let mut params = nets.phase1_params();
        assert_eq!(params.len(), nets.phase1_param_count());
        for p in params.iter_mut() {
            *p += 0.125;
        }
        nets.set_phase1_params(&params);
        assert_eq!(nets.phase1_params(), params);
        assert_relative_eq!(nets.log_std[0], -0.875, epsilon = 1e-15);
    }

    #[test]
    fn end_to_end_bundle_has_the_wider_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let nets = PolicyNets::new_end_to_end(small_e_norm(), &mut rng);
        assert!(nets.is_end_to_end());
        assert_eq!(nets.pi.n_in(), E2E_X_DIM + Z_DIM);
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("e2e.ckpt");
        nets.save(&path).expect("save");
        let loaded = PolicyNets::load(&path).expect("load");
        assert!(loaded.is_end_to_end());
    }
}
