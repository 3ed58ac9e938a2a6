//! Clipped policy-gradient update blended with on-policy imitation.
//!
//! One update consumes a batch of complete episodes. The policy head, the
//! value head, and the privileged encoder all receive gradients: the
//! encoder sits below both heads, so its parameters are shaped by the
//! imitation loss, the surrogate loss, and the value loss together. The
//! history encoder is untouched here; it is fitted in phase two.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use rotornn::{sigmoid, sigmoid_grad_from_output, Adam};

use crate::features::{ACT_DIM, Z_DIM};
use crate::nets::PolicyNets;

/// Hyperparameters of the blended update.
#[derive(Debug, Clone)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// Passes over the batch per update.
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Global gradient-norm ceiling.
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            epochs: 4,
            minibatch: 512,
            lr: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 5.0,
        }
    }
}

/// On-policy data for one update, one entry per environment step.
#[derive(Debug, Default)]
pub struct RolloutBatch {
    /// Normalized policy states.
    pub xs: Vec<DVector<f64>>,
    /// Normalized privileged vectors.
    pub es: Vec<DVector<f64>>,
    /// Sampled pre-squash actions.
    pub ys: Vec<DVector<f64>>,
    /// Log-probabilities of `ys` under the sampling-time distribution.
    pub logps: Vec<f64>,
    pub advs: Vec<f64>,
    pub rets: Vec<f64>,
    /// Expert actions normalized to [0, 1].
    pub experts: Vec<DVector<f64>>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Standardize advantages across the batch.
    pub fn normalize_advantages(&mut self) {
        let n = self.advs.len() as f64;
        if n < 2.0 {
            return;
        }
        let mean = self.advs.iter().sum::<f64>() / n;
        let var = self.advs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-8);
        for a in self.advs.iter_mut() {
            *a = (*a - mean) / std;
        }
    }
}

/// Averaged diagnostics of one update.
#[derive(Debug, Clone, Copy, Default)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub il_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
}

/// Standard normal draw via Box-Muller, keeping the dependency surface
/// small.
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u1.ln()).sqrt() * u2.cos()
}

/// Sample a pre-squash action from the diagonal Gaussian.
pub fn sample_action(mean: &DVector<f64>, log_std: &DVector<f64>, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(mean.len(), |i, _| {
        mean[i] + log_std[i].exp() * standard_normal(rng)
    })
}

/// Log-density of `y` under the diagonal Gaussian.
pub fn gaussian_logp(y: &DVector<f64>, mean: &DVector<f64>, log_std: &DVector<f64>) -> f64 {
    let mut lp = 0.0;
    for i in 0..y.len() {
        let s = log_std[i].exp();
        let t = (y[i] - mean[i]) / s;
        lp += -0.5 * t * t - log_std[i] - 0.5 * (std::f64::consts::TAU).ln();
    }
    lp
}

fn gather(cols: &[DVector<f64>], idx: &[usize]) -> DMatrix<f64> {
    let rows = cols[idx[0]].len();
    DMatrix::from_fn(rows, idx.len(), |r, c| cols[idx[c]][r])
}

/// One blended update over `batch`. `alpha` is the imitation weight; the
/// surrogate term is weighted by `1 - alpha`, the value loss is always on.
/// Returns averaged diagnostics or a description of what went non-finite.
pub fn ppo_il_update(
    nets: &mut PolicyNets,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    alpha: f64,
    opt: &mut Adam,
    rng: &mut impl Rng,
) -> Result<PpoStats, String> {
    assert!(!batch.is_empty(), "empty rollout batch");
    let x_dim = nets.x_dim();
    let n = batch.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = PpoStats::default();
    let mut chunks = 0usize;

    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for idx in order.chunks(cfg.minibatch) {
            let b = idx.len();
            let bf = b as f64;
            let x_mb = gather(&batch.xs, idx);
            let e_mb = gather(&batch.es, idx);
            let y_mb = gather(&batch.ys, idx);
            let exp_mb = gather(&batch.experts, idx);

            let mu_cache = nets.mu.forward(&e_mb);
            let z = mu_cache.output().clone();
            let mut input = DMatrix::zeros(x_dim + Z_DIM, b);
            input.rows_mut(0, x_dim).copy_from(&x_mb);
            input.rows_mut(x_dim, Z_DIM).copy_from(&z);
            let pi_cache = nets.pi.forward(&input);
            let mean = pi_cache.output().clone();
            let v_cache = nets.value.forward(&input);
            let v = v_cache.output().clone();

            let sigma = nets.log_std.map(|l| l.exp());
            let mut dmean = DMatrix::zeros(ACT_DIM, b);
            let mut dv = DMatrix::zeros(1, b);
            let mut dlogstd = vec![0.0; ACT_DIM];

            let mut mb_policy = 0.0;
            let mut mb_value = 0.0;
            let mut mb_il = 0.0;
            let mut mb_kl = 0.0;
            let mut mb_clip = 0.0;

            for (col, &s) in idx.iter().enumerate() {
                let adv = batch.advs[s];
                let mut logp_new = 0.0;
                for i in 0..ACT_DIM {
                    let t = (y_mb[(i, col)] - mean[(i, col)]) / sigma[i];
                    logp_new +=
                        -0.5 * t * t - nets.log_std[i] - 0.5 * (std::f64::consts::TAU).ln();
                }
                let ratio = (logp_new - batch.logps[s]).exp();
                let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
                let surr1 = ratio * adv;
                let surr2 = clipped * adv;
                mb_policy += -surr1.min(surr2) / bf;
                mb_kl += (batch.logps[s] - logp_new) / bf;
                if (ratio - clipped).abs() > 1e-12 {
                    mb_clip += 1.0 / bf;
                }

                // Gradient of the surrogate flows only on the unclipped
                // branch of the min.
                if surr1 <= surr2 {
                    let w = (1.0 - alpha) * adv * ratio / bf;
                    for i in 0..ACT_DIM {
                        let diff = y_mb[(i, col)] - mean[(i, col)];
                        dmean[(i, col)] += -w * diff / (sigma[i] * sigma[i]);
                        dlogstd[i] += -w * (diff * diff / (sigma[i] * sigma[i]) - 1.0);
                    }
                }

                // Imitation in squashed space.
                let mut il = 0.0;
                for i in 0..ACT_DIM {
                    let a = sigmoid(mean[(i, col)]);
                    let d = a - exp_mb[(i, col)];
                    il += d * d;
                    dmean[(i, col)] += alpha * 2.0 * d * sigmoid_grad_from_output(a) / bf;
                }
                mb_il += il / bf;

                let verr = v[(0, col)] - batch.rets[s];
                mb_value += verr * verr / bf;
                dv[(0, col)] = cfg.value_coef * 2.0 * verr / bf;
            }

            let entropy: f64 = nets
                .log_std
                .iter()
                .map(|l| l + 0.5 * (std::f64::consts::TAU * std::f64::consts::E).ln())
                .sum();
            if cfg.entropy_coef > 0.0 {
                for g in dlogstd.iter_mut() {
                    *g -= cfg.entropy_coef;
                }
            }

            if !(mb_policy.is_finite() && mb_value.is_finite() && mb_il.is_finite()) {
                return Err(format!(
                    "losses policy={mb_policy} value={mb_value} il={mb_il}"
                ));
            }

            nets.zero_phase1_grads();
            let dinput_pi = nets.pi.backward(&pi_cache, &dmean);
            let dinput_v = nets.value.backward(&v_cache, &dv);
            let dz = dinput_pi.rows(x_dim, Z_DIM) + dinput_v.rows(x_dim, Z_DIM);
            nets.mu.backward(&mu_cache, &dz.into_owned());

            let mut grads = nets.phase1_grads(&dlogstd);
            let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(format!("gradient norm {norm}"));
            }
            if norm > cfg.max_grad_norm {
                let scale = cfg.max_grad_norm / norm;
                for g in grads.iter_mut() {
                    *g *= scale;
                }
            }
            let mut params = nets.phase1_params();
            opt.step(&mut params, &grads);
            nets.set_phase1_params(&params);

            stats.policy_loss += mb_policy;
            stats.value_loss += mb_value;
            stats.il_loss += mb_il;
            stats.entropy += entropy;
            stats.approx_kl += mb_kl;
            stats.clip_frac += mb_clip;
            chunks += 1;
        }
    }

    let cf = chunks as f64;
    stats.policy_loss /= cf;
    stats.value_loss /= cf;
    stats.il_loss /= cf;
    stats.entropy /= cf;
    stats.approx_kl /= cf;
    stats.clip_frac /= cf;
    Ok(stats)
}
