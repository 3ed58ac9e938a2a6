//! Episode environment used by both training phases.
//!
//! Wraps the simulator together with the 50 Hz high-level loop, the expert
//! low-level loop (queried every step for on-policy imitation targets), the
//! reward computation, and the optional mid-episode payload attachment.

use nalgebra::{DVector, Vector3, Vector4};
use rand::Rng;

use rotorctl::{rate_pd_forces, HighLevelCommand, HighLevelGains, HighLevelPid, LowLevelPd, RateGains};
use rotorsim::{
    sample_disturbance, sample_vehicle, CrashCause, ParamRanges, SimConfig, Simulator, SizeFactor,
    Trajectory, TrajectorySpec, VehicleParams,
};

use crate::features::{e2e_raw_state, raw_state};
use crate::reward::{step_reward, RewardInputs, RewardTerms, RewardWeights, TrackingTerm};

/// What the policy observes in place of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputMode {
    /// Measured thrust and body rate plus the high-level command.
    #[default]
    Cascade,
    /// Measured thrust and body rate plus raw position, velocity, and goal
    /// offset; the high-level loop still runs but only to supply imitation
    /// targets and reward references.
    EndToEnd,
}

/// Sampling and physics settings for training episodes.
#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub ranges: ParamRanges,
    /// Half-width of the size-factor interval around 0.5.
    pub delta: f64,
    /// Multiplicative parameter noise and per-motor effectiveness draws.
    pub noise: bool,
    /// Probability that an episode contains a payload attachment event.
    pub disturb_prob: f64,
    /// Time window (s) in which the event can occur.
    pub disturb_window: (f64, f64),
    pub sim: SimConfig,
    pub traj: TrajectorySpec,
    pub mode: InputMode,
    /// Low-level steps per high-level update.
    pub hl_every: usize,
    pub reward: RewardWeights,
    pub tracking: TrackingTerm,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            ranges: ParamRanges::training(),
            delta: 0.1,
            noise: true,
            disturb_prob: 0.5,
            disturb_window: (1.0, 3.0),
            sim: SimConfig::default(),
            traj: TrajectorySpec::default(),
            mode: InputMode::Cascade,
            hl_every: 10,
            reward: RewardWeights::default(),
            tracking: TrackingTerm::Torque,
        }
    }
}

/// Result of applying one action.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub reward: RewardTerms,
    pub done: bool,
    pub crashed: Option<CrashCause>,
}

/// One training episode's worth of simulator, reference, and expert state.
pub struct TrainEnv {
    sim: Simulator,
    hl: HighLevelPid,
    expert: LowLevelPd,
    rate: RateGains,
    traj: Trajectory,
    held: HighLevelCommand,
    e_raw: DVector<f64>,
    pending: Option<(f64, VehicleParams)>,
    prev_action: Option<Vector4<f64>>,
    steps: u64,
    cfg: EnvConfig,
}

impl TrainEnv {
    /// Draw a vehicle at size factor `0.5 +- delta`, spawn it hovering at
    /// the origin, and sample a reference trajectory plus (sometimes) a
    /// payload event.
    pub fn sample(cfg: &EnvConfig, rng: &mut impl Rng) -> Self {
        let c = 0.5 + rng.gen_range(-cfg.delta..=cfg.delta);
        let params = sample_vehicle(&cfg.ranges, SizeFactor(c), cfg.noise, rng);
        let start = Vector3::zeros();
        let traj = cfg.traj.sample(start, rng);
        let pending = if cfg.disturb_prob > 0.0 && rng.gen_bool(cfg.disturb_prob) {
            let t_d = rng.gen_range(cfg.disturb_window.0..=cfg.disturb_window.1);
            let disturbed = sample_disturbance(&params, &cfg.ranges, rng);
            Some((t_d, disturbed))
        } else {
            None
        };
        let sim = Simulator::new(cfg.sim, params, start);
        let e_raw = DVector::from_column_slice(&sim.params().env_vector());
        let gravity = cfg.sim.gravity;
        Self {
            sim,
            hl: HighLevelPid::new(HighLevelGains {
                gravity,
                ..HighLevelGains::default()
            }),
            expert: LowLevelPd::default(),
            rate: RateGains::default(),
            traj,
            held: HighLevelCommand::hover(gravity),
            e_raw,
            pending,
            prev_action: None,
            steps: 0,
            cfg: cfg.clone(),
        }
    }

    /// Refresh the high-level command if this step is on the 50 Hz grid and
    /// return the raw policy state plus the expert's normalized action for
    /// the same command.
    pub fn begin_step(&mut self) -> (DVector<f64>, Vector4<f64>) {
        let obs = self.sim.observe();
        if (self.steps as usize).is_multiple_of(self.cfg.hl_every) {
            let r = self.traj.sample(self.sim.time());
            self.held = self.hl.update(&obs, &r);
        }
        let x_raw = match self.cfg.mode {
            InputMode::Cascade => raw_state(&obs, &self.held),
            InputMode::EndToEnd => e2e_raw_state(&obs, &self.traj.sample(self.sim.time())),
        };
        let wmax = self.sim.params().max_motor_speed;
        let speeds = self.expert.command(&self.held, &obs, self.sim.params());
        let expert_norm = speeds.map(|s| (s / wmax).clamp(0.0, 1.0));
        (x_raw, expert_norm)
    }

    /// Apply a normalized action (per-motor fraction of the speed limit),
    /// advance the simulator, and score the step.
    pub fn apply(&mut self, action_norm: &Vector4<f64>) -> StepOutcome {
        let params = self.sim.params().clone();
        let speeds = action_norm * params.max_motor_speed;
        let state = self.sim.step(&speeds).clone();

        // Realized rotor torque from the true post-step motor speeds.
        let forces = state.motor_speed.map(|w| params.thrust_coeff * w * w);
        let wrench = params.allocation() * forces;
        let tau = Vector3::new(wrench[1], wrench[2], wrench[3]);
        // Torque the rate loop would demand at the true state, true inertia.
        let (_, tau_des) = rate_pd_forces(&self.held, &state.omega, &params, &self.rate);

        let reward = step_reward(
            &self.cfg.reward,
            self.cfg.tracking,
            self.cfg.sim.dt,
            &RewardInputs {
                action: *action_norm,
                prev_action: self.prev_action.unwrap_or(*action_norm),
                c_sigma: state.c_sigma,
                c_sigma_des: self.held.c_sigma_des,
                tau,
                tau_des,
                omega: state.omega,
                omega_des: self.held.omega_des,
            },
        );
        self.prev_action = Some(*action_norm);
        self.steps += 1;

        if let Some((t_d, disturbed)) = &self.pending {
            if self.sim.time() >= *t_d {
                self.sim.set_params(disturbed.clone());
                self.e_raw = DVector::from_column_slice(&self.sim.params().env_vector());
                self.pending = None;
            }
        }

        StepOutcome {
            reward,
            done: self.sim.done(),
            crashed: self.sim.crashed(),
        }
    }

    pub fn e_raw(&self) -> &DVector<f64> {
        &self.e_raw
    }

    pub fn params(&self) -> &VehicleParams {
        self.sim.params()
    }

    pub fn max_motor_speed(&self) -> f64 {
        self.sim.params().max_motor_speed
    }

    pub fn time(&self) -> f64 {
        self.sim.time()
    }

    /// Fraction of the episode length survived so far.
    pub fn normalized_length(&self) -> f64 {
        self.sim.time() / self.cfg.sim.episode_len
    }

    pub fn done(&self) -> bool {
        self.sim.done()
    }

    pub fn crashed(&self) -> Option<CrashCause> {
        self.sim.crashed()
    }

    /// Position error against the reference right now (diagnostic).
    pub fn position_error(&self) -> f64 {
        (self.sim.state().pos - self.traj.sample(self.sim.time()).pos).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn expert_actions_keep_the_episode_alive() {
        let cfg = EnvConfig {
            disturb_prob: 0.0,
            ..EnvConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut env = TrainEnv::sample(&cfg, &mut rng);
        let mut total = 0.0;
        loop {
            let (_, expert) = env.begin_step();
            let out = env.apply(&expert);
            total += out.reward.total;
            if out.done {
                assert!(out.crashed.is_none(), "expert crashed: {:?}", out.crashed);
                break;
            }
        }
        // The expert survives the whole episode. Its reward is mildly
        // negative because the 10 ms motor lag leaves a residual thrust and
        // torque tracking cost during maneuvers; anything far below that
        // indicates a broken loop.
        assert!(env.normalized_length() > 0.999);
        assert!(total.is_finite() && total > -60.0, "expert reward too low: {total}");
    }

    #[test]
    fn payload_event_updates_the_privileged_vector() {
        let cfg = EnvConfig {
            disturb_prob: 1.0,
            disturb_window: (0.5, 0.5),
            ..EnvConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut env = TrainEnv::sample(&cfg, &mut rng);
        let before = env.e_raw().clone();
        for _ in 0..500 {
            let (_, expert) = env.begin_step();
            env.apply(&expert);
        }
        let after = env.e_raw().clone();
        assert!(after[31] > 0.0, "payload mass entry not set");
        assert!(after[0] > before[0], "mass entry did not grow");
        assert!(after[33] != 0.0, "pitch torque entry not set");
    }

    #[test]
    fn constant_half_throttle_eventually_terminates() {
        let cfg = EnvConfig {
            disturb_prob: 0.0,
            ..EnvConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut env = TrainEnv::sample(&cfg, &mut rng);
        let a = Vector4::repeat(0.5);
        let mut done = false;
        for _ in 0..2500 {
            env.begin_step();
            let out = env.apply(&a);
            if out.done {
                done = out.crashed.is_some() || env.normalized_length() >= 1.0;
                break;
            }
        }
        assert!(done, "episode neither crashed nor timed out");
    }
}
