//! Phase one: train policy, value head, and privileged encoder.
//!
//! Rollouts are collected with the current stochastic policy while the
//! expert cascade is queried at every visited state, so the imitation
//! targets are on-policy. The update blends the imitation loss with the
//! clipped surrogate; the imitation weight starts at one and decays
//! exponentially with the epoch index, handing control over to the
//! reinforcement term as training progresses.

use std::io::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rotornn::Adam;

use crate::gae::gae;
use crate::nets::PolicyNets;
use crate::ppo::{gaussian_logp, ppo_il_update, sample_action, PpoConfig, RolloutBatch};
use crate::rollout::{EnvConfig, TrainEnv};
use crate::TrainError;

/// Which objective drives phase one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrainMode {
    /// Exponentially decaying imitation weight on top of the surrogate.
    #[default]
    Blended,
    /// Imitation only (`alpha = 1`).
    IlOnly,
    /// Surrogate only (`alpha = 0`).
    RlOnly,
}

impl TrainMode {
    pub fn alpha(&self, epoch: usize) -> f64 {
        match self {
            TrainMode::Blended => (-1e-3 * epoch as f64).exp(),
            TrainMode::IlOnly => 1.0,
            TrainMode::RlOnly => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Phase1Config {
    /// Total environment steps to collect across all epochs.
    pub total_steps: usize,
    /// Minimum steps per update batch; whole episodes are collected until
    /// this is reached.
    pub rollout_steps: usize,
    pub mode: TrainMode,
    pub ppo: PpoConfig,
    pub env: EnvConfig,
    pub seed: u64,
}

impl Default for Phase1Config {
    fn default() -> Self {
        Self {
            total_steps: 120_000,
            rollout_steps: 4096,
            mode: TrainMode::Blended,
            ppo: PpoConfig::default(),
            env: EnvConfig::default(),
            seed: 0,
        }
    }
}

/// One row of the training curve; written as CSV by [`write_curves`].
#[derive(Debug, Clone, Copy)]
pub struct EpochRow {
    pub epoch: usize,
    /// Cumulative environment steps after this epoch.
    pub env_steps: usize,
    pub alpha: f64,
    /// Mean per-episode sums over the epoch's completed episodes.
    pub reward: f64,
    pub reward_smooth: f64,
    pub reward_survive: f64,
    pub reward_thrust: f64,
    pub reward_tracking: f64,
    /// Mean fraction of the episode length survived.
    pub norm_length: f64,
    pub episodes: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub il_loss: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
}

pub struct Phase1Result {
    pub nets: PolicyNets,
    pub curve: Vec<EpochRow>,
}

impl Phase1Result {
    /// Mean normalized episode length over the final tenth of the curve.
    pub fn tail_norm_length(&self) -> f64 {
        let n = self.curve.len();
        let tail = (n / 10).max(1);
        let rows = &self.curve[n - tail..];
        rows.iter().map(|r| r.norm_length).sum::<f64>() / tail as f64
    }
}

pub fn train_phase1(nets: &mut PolicyNets, cfg: &Phase1Config) -> Result<Phase1Result, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.ppo.lr, nets.phase1_param_count());
    let mut curve = Vec::new();
    let mut env_steps = 0usize;
    let mut epoch = 0usize;

    while env_steps < cfg.total_steps {
        let mut batch = RolloutBatch::default();
        let mut ep_rewards = Vec::new();
        let mut ep_terms = Vec::new();
        let mut ep_lengths = Vec::new();

        while batch.len() < cfg.rollout_steps && env_steps + batch.len() < cfg.total_steps {
            let mut env = TrainEnv::sample(&cfg.env, &mut rng);
            let mut rewards = Vec::new();
            let mut values = Vec::new();
            let mut terms = [0.0; 4];
            let crashed = loop {
                let (x_raw, expert) = env.begin_step();
                let x = nets.x_norm.normalize(&x_raw);
                let e = nets.e_norm.normalize(env.e_raw());
                let z = nets.mu.infer(&e);
                let input = nets.policy_input(&x, &z);
                let mean = nets.pi.infer(&input);
                let v = nets.value.infer(&input)[0];
                let y = sample_action(&mean, &nets.log_std, &mut rng);
                let logp = gaussian_logp(&y, &mean, &nets.log_std);
                let a_norm = PolicyNets::action_norm(&y);

                let out = env.apply(&a_norm);
                let r = if out.reward.total.is_finite() {
                    out.reward
                } else {
                    // The state blew up this step; the episode ends below
                    // and the poisoned sample carries no usable signal.
                    crate::reward::RewardTerms {
                        smooth: 0.0,
                        survive: 0.0,
                        thrust: 0.0,
                        tracking: 0.0,
                        total: 0.0,
                        comparable: 0.0,
                    }
                };

                batch.xs.push(x);
                batch.es.push(e);
                batch.ys.push(y);
                batch.logps.push(logp);
                batch.experts.push(nalgebra::DVector::from_column_slice(expert.as_slice()));
                rewards.push(r.total);
                values.push(v);
                terms[0] += r.smooth;
                terms[1] += r.survive;
                terms[2] += r.thrust;
                terms[3] += r.tracking;

                if out.done {
                    break out.crashed.is_some();
                }
            };

            // Crashes are terminal; time-limit endings bootstrap from the
            // critic at the final state.
            let bootstrap = if crashed {
                0.0
            } else {
                let (x_raw, _) = env.begin_step();
                let x = nets.x_norm.normalize(&x_raw);
                let e = nets.e_norm.normalize(env.e_raw());
                let z = nets.mu.infer(&e);
                nets.value.infer(&nets.policy_input(&x, &z))[0]
            };
            let (adv, ret) = gae(&rewards, &values, bootstrap, cfg.ppo.gamma, cfg.ppo.lambda);
            batch.advs.extend(adv);
            batch.rets.extend(ret);

            ep_rewards.push(rewards.iter().sum::<f64>());
            ep_terms.push(terms);
            ep_lengths.push(env.normalized_length());
        }

        env_steps += batch.len();
        let alpha = cfg.mode.alpha(epoch);
        batch.normalize_advantages();
        let stats = ppo_il_update(nets, &batch, &cfg.ppo, alpha, &mut opt, &mut rng).map_err(
            |detail| TrainError::Diverged {
                epoch,
                what: "update",
                detail,
            },
        )?;

        let n_ep = ep_rewards.len().max(1) as f64;
        let row = EpochRow {
            epoch,
            env_steps,
            alpha,
            reward: ep_rewards.iter().sum::<f64>() / n_ep,
            reward_smooth: ep_terms.iter().map(|t| t[0]).sum::<f64>() / n_ep,
            reward_survive: ep_terms.iter().map(|t| t[1]).sum::<f64>() / n_ep,
            reward_thrust: ep_terms.iter().map(|t| t[2]).sum::<f64>() / n_ep,
            reward_tracking: ep_terms.iter().map(|t| t[3]).sum::<f64>() / n_ep,
            norm_length: ep_lengths.iter().sum::<f64>() / n_ep,
            episodes: ep_rewards.len(),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            il_loss: stats.il_loss,
            approx_kl: stats.approx_kl,
            clip_frac: stats.clip_frac,
        };
        if !(row.reward.is_finite() && row.norm_length.is_finite()) {
            return Err(TrainError::Diverged {
                epoch,
                what: "curve",
                detail: format!("reward={} norm_length={}", row.reward, row.norm_length),
            });
        }
        curve.push(row);
        epoch += 1;
    }

    Ok(Phase1Result {
        nets: nets.clone(),
        curve,
    })
}

/// Write the curve as CSV with a fixed column order.
pub fn write_curves(rows: &[EpochRow], path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(
        f,
        "epoch,env_steps,alpha,reward,reward_smooth,reward_survive,reward_thrust,\
         reward_tracking,norm_length,episodes,policy_loss,value_loss,il_loss,approx_kl,clip_frac"
    )?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.env_steps,
            r.alpha,
            r.reward,
            r.reward_smooth,
            r.reward_survive,
            r.reward_thrust,
            r.reward_tracking,
            r.norm_length,
            r.episodes,
            r.policy_loss,
            r.value_loss,
            r.il_loss,
            r.approx_kl,
            r.clip_frac
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn blend_schedule_decays_exponentially() {
        let m = TrainMode::Blended;
        assert_relative_eq!(m.alpha(0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(m.alpha(1000), (-1.0_f64).exp(), epsilon = 1e-12);
        assert!(m.alpha(10) < m.alpha(9));
        assert_relative_eq!(TrainMode::IlOnly.alpha(500), 1.0, epsilon = 1e-15);
        assert_relative_eq!(TrainMode::RlOnly.alpha(0), 0.0, epsilon = 1e-15);
    }
}
