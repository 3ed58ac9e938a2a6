//! Phase two: distill the privileged encoder into the history encoder.
//!
//! The student (policy driven by the history encoder's current estimate)
//! is rolled out on freshly sampled vehicles; at a fixed stride the
//! history window is stored together with the privileged latent for the
//! vehicle's current parameters. The history encoder is then fitted by
//! minibatch regression. Held-out episodes use vehicles the fit never saw;
//! the fit must beat the zero predictor on them by a wide margin before
//! the student is trusted.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rotornn::{Adam, ConvEncoder, Parameterized};

use crate::nets::PolicyNets;
use crate::rollout::{EnvConfig, TrainEnv};
use crate::runtime::PolicyRuntime;
use crate::TrainError;

#[derive(Debug, Clone)]
pub struct Phase2Config {
    /// Episodes whose samples train the encoder.
    pub train_episodes: usize,
    /// Episodes (fresh vehicles) reserved for held-out evaluation.
    pub holdout_episodes: usize,
    /// Record every this-many control steps.
    pub subsample: usize,
    /// Passes over the collected dataset.
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub env: EnvConfig,
    pub seed: u64,
}

impl Default for Phase2Config {
    fn default() -> Self {
        Self {
            train_episodes: 16,
            holdout_episodes: 4,
            subsample: 10,
            epochs: 20,
            minibatch: 32,
            lr: 1e-3,
            env: EnvConfig::default(),
            seed: 0,
        }
    }
}

pub struct Phase2Result {
    pub nets: PolicyNets,
    /// Per-epoch (train MSE, held-out MSE).
    pub curve: Vec<(usize, f64, f64)>,
    pub val_mse: f64,
    /// Held-out MSE of always predicting zero, the reference the encoder
    /// must beat.
    pub zero_mse: f64,
}

/// (history window, privileged latent) pairs.
pub type LatentDataset = Vec<(DMatrix<f64>, DVector<f64>)>;

/// Mean squared latent error of the encoder over a dataset.
pub fn phi_mse(phi: &ConvEncoder, data: &[(DMatrix<f64>, DVector<f64>)]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for (h, z) in data {
        let out = phi.forward(h).z;
        acc += (out - z).norm_squared();
    }
    acc / data.len() as f64
}

/// Fit the encoder by minibatch gradient descent; returns per-epoch
/// (train MSE, held-out MSE) measured after each epoch.
pub fn fit_phi(
    phi: &mut ConvEncoder,
    train: &[(DMatrix<f64>, DVector<f64>)],
    holdout: &[(DMatrix<f64>, DVector<f64>)],
    epochs: usize,
    minibatch: usize,
    lr: f64,
    seed: u64,
) -> Result<Vec<(usize, f64, f64)>, String> {
    assert!(!train.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Adam::new(lr, phi.param_count());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(epochs);

    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(minibatch) {
            phi.zero_grad();
            let scale = 2.0 / idx.len() as f64;
            for &s in idx {
                let (h, z) = &train[s];
                let cache = phi.forward(h);
                let dz = (&cache.z - z) * scale;
                phi.backward(&cache, &dz);
            }
            let mut params = Vec::with_capacity(phi.param_count());
            phi.export_params(&mut params);
            let mut grads = Vec::with_capacity(phi.param_count());
            phi.export_grads(&mut grads);
            if grads.iter().any(|g| !g.is_finite()) {
                return Err("non-finite encoder gradient".into());
            }
            opt.step(&mut params, &grads);
            let mut off = 0;
            phi.import_params(&params, &mut off);
        }
        let train_mse = phi_mse(phi, train);
        let val_mse = phi_mse(phi, holdout);
        if !train_mse.is_finite() || !val_mse.is_finite() {
            return Err(format!("non-finite MSE at epoch {epoch}"));
        }
        curve.push((epoch, train_mse, val_mse));
    }
    Ok(curve)
}

/// Roll out the student on `episodes` fresh vehicles and harvest
/// (history, latent) pairs.
fn collect(
    nets: &PolicyNets,
    cfg: &Phase2Config,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> LatentDataset {
    let mut data = Vec::new();
    for _ in 0..episodes {
        let mut env = TrainEnv::sample(&cfg.env, rng);
        let mut runtime = PolicyRuntime::student(nets.clone(), env.max_motor_speed(), cfg.env.sim.dt);
        let mut step = 0usize;
        loop {
            let (x_raw, _) = env.begin_step();
            if step.is_multiple_of(cfg.subsample) {
                let z_true = nets.teacher_latent(env.e_raw());
                data.push((runtime.history_matrix(), z_true));
            }
            let a = runtime.step_from_raw(&x_raw);
            let out = env.apply(&a);
            step += 1;
            if out.done {
                break;
            }
        }
    }
    data
}

pub fn train_phase2(nets: &mut PolicyNets, cfg: &Phase2Config) -> Result<Phase2Result, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train = collect(nets, cfg, cfg.train_episodes, &mut rng);
    let holdout = collect(nets, cfg, cfg.holdout_episodes, &mut rng);

    let zero_mse = if holdout.is_empty() {
        0.0
    } else {
        holdout.iter().map(|(_, z)| z.norm_squared()).sum::<f64>() / holdout.len() as f64
    };

    let mut phi = nets.phi.clone();
    let curve = fit_phi(
        &mut phi,
        &train,
        &holdout,
        cfg.epochs,
        cfg.minibatch,
        cfg.lr,
        cfg.seed.wrapping_add(1),
    )
    .map_err(|detail| TrainError::Diverged {
        epoch: 0,
        what: "encoder fit",
        detail,
    })?;
    nets.phi = phi;

    let val_mse = curve.last().map(|&(_, _, v)| v).unwrap_or(f64::NAN);
    Ok(Phase2Result {
        nets: nets.clone(),
        curve,
        val_mse,
        zero_mse,
    })
}

/// Write the distillation curve as CSV.
pub fn write_curves(rows: &[(usize, f64, f64)], path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "epoch,train_mse,holdout_mse")?;
    for (e, t, v) in rows {
        writeln!(f, "{e},{t},{v}")?;
    }
    Ok(())
}
