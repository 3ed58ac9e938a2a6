//! One TOML file configures every experiment: simulator timing, vehicle
//! distribution, controller gains, evaluation protocol, and both training
//! phases. Each results row carries the SHA-256 of the canonical
//! re-serialization of the parsed file, so artifacts produced under
//! different settings can never be confused for one another.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rotorctl::{ControlConfig, GeoConfig, HighLevelGains, IndiConfig, L1Config, RateGains};
use rotorlearn::{EnvConfig, InputMode, Phase1Config, Phase2Config, TrackingTerm, TrainMode};
use rotorsim::{ParamRanges, Range, SimConfig, TrajectorySpec};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub latency: f64,
    pub episode_len: f64,
    pub height_loss_limit: f64,
    pub body_rate_limit: f64,
    pub gravity: f64,
    pub accel_noise_std: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let c = SimConfig::default();
        Self {
            dt: c.dt,
            latency: c.latency,
            episode_len: c.episode_len,
            height_loss_limit: c.height_loss_limit,
            body_rate_limit: c.body_rate_limit,
            gravity: c.gravity,
            accel_noise_std: c.accel_noise_std,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleSection {
    /// Parameter table to draw evaluation vehicles from: "training" or
    /// "testing".
    pub ranges: String,
    /// Apply the +/-20% per-parameter noise and per-motor effectiveness.
    pub noise: bool,
}

impl Default for VehicleSection {
    fn default() -> Self {
        Self {
            ranges: "testing".into(),
            noise: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySection {
    pub pos_bound: f64,
    pub vel_bound: f64,
    pub acc_bound: f64,
    /// Motion duration interval [min, max] in seconds.
    pub duration: [f64; 2],
}

impl Default for TrajectorySection {
    fn default() -> Self {
        let t = TrajectorySpec::default();
        Self {
            pos_bound: t.pos_bound,
            vel_bound: t.vel_bound,
            acc_bound: t.acc_bound,
            duration: [t.duration.min, t.duration.max],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceSection {
    /// Chance that an episode carries a mid-flight payload attachment.
    pub probability: f64,
    /// Event time window [earliest, latest] in seconds.
    pub window: [f64; 2],
}

impl Default for DisturbanceSection {
    fn default() -> Self {
        Self {
            probability: 0.0,
            window: [1.0, 3.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub natural_freq: f64,
    pub damping: f64,
    pub attitude_tc: f64,
    pub yaw_tc: f64,
    /// Body-rate loop gains [roll, pitch, yaw] in 1/s.
    pub rate_k: [f64; 3],
    pub l1_cutoff: f64,
    pub l1_pole: f64,
    pub indi_mu: f64,
    pub indi_eps: f64,
    pub indi_cutoff: f64,
    pub geo_gamma_f: f64,
    pub geo_gamma_m: f64,
    pub geo_c1: f64,
    pub geo_force_bound: f64,
    pub geo_moment_bound: f64,
    /// Low-level steps per high-level update.
    pub hl_every: usize,
}

impl Default for ControlSection {
    fn default() -> Self {
        let hl = HighLevelGains::default();
        let rate = RateGains::default();
        let l1 = L1Config::default();
        let indi = IndiConfig::default();
        let geo = GeoConfig::default();
        Self {
            natural_freq: hl.natural_freq,
            damping: hl.damping,
            attitude_tc: hl.attitude_tc,
            yaw_tc: hl.yaw_tc,
            rate_k: [rate.k.x, rate.k.y, rate.k.z],
            l1_cutoff: l1.cutoff,
            l1_pole: l1.observer_pole,
            indi_mu: indi.mu,
            indi_eps: indi.eps,
            indi_cutoff: indi.omega_dot_cutoff,
            geo_gamma_f: geo.gamma_f,
            geo_gamma_m: geo.gamma_m,
            geo_c1: geo.c1,
            geo_force_bound: geo.force_bound,
            geo_moment_bound: geo.moment_bound,
            hl_every: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub episodes: usize,
    /// Controllers evaluated by the `benchmark` command.
    pub controllers: Vec<String>,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            episodes: 100,
            controllers: vec![
                "expert-pd".into(),
                "nominal-pd".into(),
                "l1-low".into(),
                "l1-high".into(),
                "geo".into(),
                "indi".into(),
            ],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Half-widths of the size-factor interval centered on 0.5.
    pub deltas: Vec<f64>,
    pub episodes: usize,
    /// Parameter table the sweep extrapolates: "training" or "testing".
    pub ranges: String,
    pub noise: bool,
}

impl Default for SweepSection {
    /// Noise defaults to off here, unlike the benchmark: the sweep measures
    /// degradation against the half-width δ alone, and δ=0 must reproduce
    /// the design point exactly so the nominal controller starts from its
    /// matched-plant success rate.
    fn default() -> Self {
        Self {
            deltas: vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0],
            episodes: 100,
            ranges: "training".into(),
            noise: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    /// Size-factor half-width around 0.5 during training.
    pub delta: f64,
    pub ranges: String,
    pub noise: bool,
    pub disturb_prob: f64,
    pub disturb_window: [f64; 2],
    /// Tracking penalty variant: "torque" or "angvel".
    pub tracking: String,
    /// Vehicles drawn when fitting the environment-vector normalizer.
    pub env_norm_samples: usize,
    pub env_norm_seed: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            delta: 0.1,
            ranges: "training".into(),
            noise: true,
            disturb_prob: 0.5,
            disturb_window: [1.0, 3.0],
            tracking: "torque".into(),
            env_norm_samples: 4096,
            env_norm_seed: 2024,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Phase1Section {
    pub total_steps: usize,
    pub rollout_steps: usize,
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
}

impl Default for Phase1Section {
    fn default() -> Self {
        let c = Phase1Config::default();
        Self {
            total_steps: c.total_steps,
            rollout_steps: c.rollout_steps,
            clip: c.ppo.clip,
            gamma: c.ppo.gamma,
            lambda: c.ppo.lambda,
            epochs: c.ppo.epochs,
            minibatch: c.ppo.minibatch,
            lr: c.ppo.lr,
            value_coef: c.ppo.value_coef,
            entropy_coef: c.ppo.entropy_coef,
            max_grad_norm: c.ppo.max_grad_norm,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Phase2Section {
    pub train_episodes: usize,
    pub holdout_episodes: usize,
    pub subsample: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
}

impl Default for Phase2Section {
    fn default() -> Self {
        let c = Phase2Config::default();
        Self {
            train_episodes: c.train_episodes,
            holdout_episodes: c.holdout_episodes,
            subsample: c.subsample,
            epochs: c.epochs,
            minibatch: c.minibatch,
            lr: c.lr,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimSection,
    pub vehicle: VehicleSection,
    pub trajectory: TrajectorySection,
    pub disturbance: DisturbanceSection,
    pub control: ControlSection,
    pub benchmark: BenchmarkSection,
    pub sweep: SweepSection,
    pub training: TrainingSection,
    pub phase1: Phase1Section,
    pub phase2: Phase2Section,
}

fn ranges_by_name(name: &str) -> Result<ParamRanges, ConfigError> {
    match name {
        "training" => Ok(ParamRanges::training()),
        "testing" => Ok(ParamRanges::testing()),
        other => Err(invalid(format!(
            "unknown parameter table {other:?}, expected \"training\" or \"testing\""
        ))),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 over the canonical re-serialization, so formatting and key
    /// order in the source file do not affect the hash.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        let nonneg = |v: f64, name: &str| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be non-negative, got {v}")))
            }
        };

        pos(self.sim.dt, "sim.dt")?;
        nonneg(self.sim.latency, "sim.latency")?;
        pos(self.sim.episode_len, "sim.episode_len")?;
        pos(self.sim.height_loss_limit, "sim.height_loss_limit")?;
        pos(self.sim.body_rate_limit, "sim.body_rate_limit")?;
        pos(self.sim.gravity, "sim.gravity")?;
        nonneg(self.sim.accel_noise_std, "sim.accel_noise_std")?;
        if self.sim.episode_len < self.sim.dt {
            return Err(invalid("sim.episode_len shorter than one step"));
        }

        ranges_by_name(&self.vehicle.ranges)?;
        ranges_by_name(&self.sweep.ranges)?;
        ranges_by_name(&self.training.ranges)?;

        nonneg(self.trajectory.pos_bound, "trajectory.pos_bound")?;
        nonneg(self.trajectory.vel_bound, "trajectory.vel_bound")?;
        nonneg(self.trajectory.acc_bound, "trajectory.acc_bound")?;
        let [d0, d1] = self.trajectory.duration;
        pos(d0, "trajectory.duration[0]")?;
        pos(d1, "trajectory.duration[1]")?;
        if d0 > d1 {
            return Err(invalid("trajectory.duration interval is reversed"));
        }

        for (p, w, name) in [
            (self.disturbance.probability, self.disturbance.window, "disturbance"),
            (
                self.training.disturb_prob,
                self.training.disturb_window,
                "training.disturb",
            ),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{name} probability must be in [0, 1], got {p}")));
            }
            nonneg(w[0], &format!("{name} window start"))?;
            if w[0] > w[1] {
                return Err(invalid(format!("{name} window is reversed")));
            }
        }

        pos(self.control.natural_freq, "control.natural_freq")?;
        pos(self.control.damping, "control.damping")?;
        pos(self.control.attitude_tc, "control.attitude_tc")?;
        pos(self.control.yaw_tc, "control.yaw_tc")?;
        for k in self.control.rate_k {
            pos(k, "control.rate_k")?;
        }
        pos(self.control.l1_cutoff, "control.l1_cutoff")?;
        if !(self.control.l1_pole.is_finite() && self.control.l1_pole < 0.0) {
            return Err(invalid("control.l1_pole must be negative"));
        }
        pos(self.control.indi_mu, "control.indi_mu")?;
        pos(self.control.indi_eps, "control.indi_eps")?;
        pos(self.control.indi_cutoff, "control.indi_cutoff")?;
        pos(self.control.geo_gamma_f, "control.geo_gamma_f")?;
        pos(self.control.geo_gamma_m, "control.geo_gamma_m")?;
        nonneg(self.control.geo_c1, "control.geo_c1")?;
        pos(self.control.geo_force_bound, "control.geo_force_bound")?;
        pos(self.control.geo_moment_bound, "control.geo_moment_bound")?;
        if self.control.hl_every == 0 {
            return Err(invalid("control.hl_every must be at least 1"));
        }

        if self.benchmark.episodes == 0 {
            return Err(invalid("benchmark.episodes must be at least 1"));
        }
        for name in &self.benchmark.controllers {
            crate::episode::ControllerKind::parse(name)
                .ok_or_else(|| invalid(format!("unknown controller {name:?}")))?;
        }
        if self.sweep.episodes == 0 {
            return Err(invalid("sweep.episodes must be at least 1"));
        }
        for d in &self.sweep.deltas {
            nonneg(*d, "sweep.deltas entry")?;
        }

        nonneg(self.training.delta, "training.delta")?;
        tracking_by_name(&self.training.tracking)?;
        if self.training.env_norm_samples < 2 {
            return Err(invalid("training.env_norm_samples must be at least 2"));
        }

        if self.phase1.total_steps == 0 || self.phase1.rollout_steps == 0 {
            return Err(invalid("phase1 step counts must be positive"));
        }
        if self.phase1.epochs == 0 || self.phase1.minibatch == 0 {
            return Err(invalid("phase1 epochs and minibatch must be positive"));
        }
        pos(self.phase1.lr, "phase1.lr")?;
        pos(self.phase1.clip, "phase1.clip")?;
        if !(0.0..=1.0).contains(&self.phase1.gamma) || !(0.0..=1.0).contains(&self.phase1.lambda) {
            return Err(invalid("phase1 gamma and lambda must be in [0, 1]"));
        }
        nonneg(self.phase1.value_coef, "phase1.value_coef")?;
        nonneg(self.phase1.entropy_coef, "phase1.entropy_coef")?;
        pos(self.phase1.max_grad_norm, "phase1.max_grad_norm")?;

        if self.phase2.train_episodes == 0 || self.phase2.holdout_episodes == 0 {
            return Err(invalid("phase2 episode counts must be positive"));
        }
        if self.phase2.subsample == 0 || self.phase2.epochs == 0 || self.phase2.minibatch == 0 {
            return Err(invalid("phase2 subsample, epochs, and minibatch must be positive"));
        }
        pos(self.phase2.lr, "phase2.lr")?;

        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            dt: self.sim.dt,
            latency: self.sim.latency,
            episode_len: self.sim.episode_len,
            height_loss_limit: self.sim.height_loss_limit,
            body_rate_limit: self.sim.body_rate_limit,
            gravity: self.sim.gravity,
            accel_noise_std: self.sim.accel_noise_std,
        }
    }

    pub fn eval_ranges(&self) -> ParamRanges {
        ranges_by_name(&self.vehicle.ranges).expect("validated")
    }

    pub fn sweep_ranges(&self) -> ParamRanges {
        ranges_by_name(&self.sweep.ranges).expect("validated")
    }

    pub fn training_ranges(&self) -> ParamRanges {
        ranges_by_name(&self.training.ranges).expect("validated")
    }

    pub fn traj_spec(&self) -> TrajectorySpec {
        TrajectorySpec {
            pos_bound: self.trajectory.pos_bound,
            vel_bound: self.trajectory.vel_bound,
            acc_bound: self.trajectory.acc_bound,
            duration: Range::new(self.trajectory.duration[0], self.trajectory.duration[1]),
        }
    }

    pub fn control_config(&self) -> ControlConfig {
        let c = &self.control;
        ControlConfig {
            highlevel: HighLevelGains {
                natural_freq: c.natural_freq,
                damping: c.damping,
                attitude_tc: c.attitude_tc,
                yaw_tc: c.yaw_tc,
                gravity: self.sim.gravity,
            },
            rate: RateGains {
                k: nalgebra::Vector3::new(c.rate_k[0], c.rate_k[1], c.rate_k[2]),
            },
            l1: L1Config {
                cutoff: c.l1_cutoff,
                observer_pole: c.l1_pole,
            },
            geo: GeoConfig {
                gamma_f: c.geo_gamma_f,
                gamma_m: c.geo_gamma_m,
                c1: c.geo_c1,
                force_bound: c.geo_force_bound,
                moment_bound: c.geo_moment_bound,
            },
            indi: IndiConfig {
                mu: c.indi_mu,
                eps: c.indi_eps,
                omega_dot_cutoff: c.indi_cutoff,
            },
            hl_every: c.hl_every,
        }
    }

    /// Training environment built from the `[training]` section.
    pub fn train_env(&self, mode: InputMode) -> EnvConfig {
        EnvConfig {
            ranges: self.training_ranges(),
            delta: self.training.delta,
            noise: self.training.noise,
            disturb_prob: self.training.disturb_prob,
            disturb_window: (self.training.disturb_window[0], self.training.disturb_window[1]),
            sim: self.sim_config(),
            traj: self.traj_spec(),
            mode,
            hl_every: self.control.hl_every,
            reward: rotorlearn::RewardWeights::default(),
            tracking: tracking_by_name(&self.training.tracking).expect("validated"),
        }
    }

    pub fn phase1_config(&self, mode: TrainMode, seed: u64) -> Phase1Config {
        let p = &self.phase1;
        Phase1Config {
            total_steps: p.total_steps,
            rollout_steps: p.rollout_steps,
            mode,
            ppo: rotorlearn::PpoConfig {
                clip: p.clip,
                gamma: p.gamma,
                lambda: p.lambda,
                epochs: p.epochs,
                minibatch: p.minibatch,
                lr: p.lr,
                value_coef: p.value_coef,
                entropy_coef: p.entropy_coef,
                max_grad_norm: p.max_grad_norm,
            },
            env: self.train_env(InputMode::Cascade),
            seed,
        }
    }

    pub fn phase2_config(&self, seed: u64) -> Phase2Config {
        let p = &self.phase2;
        Phase2Config {
            train_episodes: p.train_episodes,
            holdout_episodes: p.holdout_episodes,
            subsample: p.subsample,
            epochs: p.epochs,
            minibatch: p.minibatch,
            lr: p.lr,
            env: self.train_env(InputMode::Cascade),
            seed,
        }
    }
}

fn tracking_by_name(name: &str) -> Result<TrackingTerm, ConfigError> {
    match name {
        "torque" => Ok(TrackingTerm::Torque),
        "angvel" => Ok(TrackingTerm::AngVel),
        other => Err(invalid(format!(
            "unknown tracking term {other:?}, expected \"torque\" or \"angvel\""
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_and_hash_ignores_formatting() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let reparsed = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.hash(), reparsed.hash());

        // Same settings spelled differently must hash identically.
        let sparse = "[sim]\ndt = 0.002\n";
        let a = RunConfig::from_toml_str(sparse).unwrap();
        let b = RunConfig::from_toml_str("").unwrap();
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn bad_values_are_rejected() {
        for text in [
            "[sim]\ndt = -0.002\n",
            "[sim]\ndt = 0.0\n",
            "[vehicle]\nranges = \"tiny\"\n",
            "[trajectory]\nduration = [5.0, 1.0]\n",
            "[control]\nl1_pole = 10.0\n",
            "[benchmark]\ncontrollers = [\"warp-drive\"]\n",
            "[disturbance]\nprobability = 1.5\n",
            "[training]\ntracking = \"thrust\"\n",
            "[phase1]\ngamma = 1.5\n",
            "not even toml",
            "[sim]\nunknown_knob = 1\n",
        ] {
            assert!(RunConfig::from_toml_str(text).is_err(), "accepted {text:?}");
        }
    }

    #[test]
    fn hash_distinguishes_settings() {
        let a = RunConfig::from_toml_str("").unwrap();
        let b = RunConfig::from_toml_str("[sim]\ndt = 0.001\n").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn sections_map_onto_module_configs() {
        let cfg = RunConfig::default();
        let sim = cfg.sim_config();
        assert_eq!(sim.dt, 0.002);
        assert_eq!(sim.episode_len, 5.0);
        let ctl = cfg.control_config();
        assert_eq!(ctl.rate.k.x, 20.0);
        assert_eq!(ctl.hl_every, 10);
        let p1 = cfg.phase1_config(rotorlearn::TrainMode::Blended, 7);
        assert_eq!(p1.seed, 7);
        assert_eq!(p1.env.delta, 0.1);
        let p2 = cfg.phase2_config(9);
        assert_eq!(p2.train_episodes, 16);
    }
}
