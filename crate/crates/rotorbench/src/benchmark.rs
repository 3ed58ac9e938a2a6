//! Seeded episode batches: the standard benchmark over a parameter table
//! and the size-factor sweep around the nominal design point.
//!
//! Reproducibility contract: each episode derives its own RNG purely from
//! the base seed and its index, so results are identical no matter how many
//! worker threads run the batch, and every controller in a batch sees the
//! same sequence of vehicles, trajectories, and disturbances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use rotorctl::ControlConfig;
use rotorlearn::PolicyNets;
use rotorsim::{
    sample_disturbance, sample_vehicle, ParamRanges, SimConfig, SizeFactor, TrajectorySpec,
};

use crate::config::RunConfig;
use crate::episode::{run_episode, ControllerKind, EpisodeSetup};
use crate::metrics::{aggregate, Aggregate, EpisodeRecord};

/// How the size factor of each episode's vehicle is drawn.
#[derive(Debug, Clone, Copy)]
pub enum SizeDraw {
    /// Uniform over the whole table, `c ~ U[0, 1]`.
    Uniform01,
    /// Uniform in `[0.5 - delta, 0.5 + delta]`; the sampler clamps at the
    /// physical floor, and `delta = 0` pins the nominal design point.
    Centered { delta: f64 },
}

/// Everything needed to draw one episode.
#[derive(Debug, Clone)]
pub struct EpisodeProtocol {
    pub ranges: ParamRanges,
    pub noise: bool,
    pub draw: SizeDraw,
    pub traj: TrajectorySpec,
    pub disturb_prob: f64,
    pub disturb_window: (f64, f64),
}

impl EpisodeProtocol {
    /// Standard benchmark protocol from the config's `[vehicle]`,
    /// `[trajectory]`, and `[disturbance]` sections.
    ///
    /// Evaluation pins the motion duration at the upper end of the
    /// configured interval, so every reference spans the whole episode;
    /// the interval itself is a training-time randomization.
    pub fn benchmark(cfg: &RunConfig) -> Self {
        let mut traj = cfg.traj_spec();
        traj.duration = rotorsim::Range::new(traj.duration.max, traj.duration.max);
        Self {
            ranges: cfg.eval_ranges(),
            noise: cfg.vehicle.noise,
            draw: SizeDraw::Uniform01,
            traj,
            disturb_prob: cfg.disturbance.probability,
            disturb_window: (cfg.disturbance.window[0], cfg.disturbance.window[1]),
        }
    }

    /// Sweep protocol at one half-width. Like [`EpisodeProtocol::benchmark`]
    /// this is an evaluation, so the motion duration is pinned at the upper
    /// end of the configured interval.
    pub fn sweep(cfg: &RunConfig, delta: f64) -> Self {
        let mut traj = cfg.traj_spec();
        traj.duration = rotorsim::Range::new(traj.duration.max, traj.duration.max);
        Self {
            ranges: cfg.sweep_ranges(),
            noise: cfg.sweep.noise,
            draw: SizeDraw::Centered { delta },
            traj,
            disturb_prob: cfg.disturbance.probability,
            disturb_window: (cfg.disturbance.window[0], cfg.disturbance.window[1]),
        }
    }
}

/// SplitMix64 step, the usual way to spread one seed over many streams.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn episode_seed(base_seed: u64, index: usize) -> u64 {
    splitmix64(base_seed.wrapping_add(splitmix64(index as u64)))
}

/// Draw one episode from the protocol. Returns the setup and the size
/// factor it was drawn at.
pub fn sample_setup(
    protocol: &EpisodeProtocol,
    rng: &mut ChaCha8Rng,
) -> (EpisodeSetup, f64) {
    let c = match protocol.draw {
        SizeDraw::Uniform01 => rng.gen_range(0.0..=1.0),
        SizeDraw::Centered { delta } => {
            if delta > 0.0 {
                0.5 + rng.gen_range(-delta..=delta)
            } else {
                0.5
            }
        }
    };
    let params = sample_vehicle(&protocol.ranges, SizeFactor(c), protocol.noise, rng);
    let traj = protocol.traj.sample(nalgebra::Vector3::zeros(), rng);
    let disturbance = if protocol.disturb_prob > 0.0 && rng.gen_bool(protocol.disturb_prob) {
        let (w0, w1) = protocol.disturb_window;
        let t = if w1 > w0 { rng.gen_range(w0..=w1) } else { w0 };
        let after = sample_disturbance(&params, &protocol.ranges, rng);
        Some((t, after))
    } else {
        None
    };
    (
        EpisodeSetup {
            params,
            traj,
            disturbance,
            sensor_seed: None,
        },
        c,
    )
}

/// Run one controller over `episodes` drawn episodes, in parallel, with
/// results in episode order.
pub fn run_batch(
    kind: ControllerKind,
    ctl: &ControlConfig,
    sim: &SimConfig,
    protocol: &EpisodeProtocol,
    episodes: usize,
    base_seed: u64,
    delta: Option<f64>,
    nets: Option<&PolicyNets>,
) -> Result<Vec<EpisodeRecord>, String> {
    (0..episodes)
        .into_par_iter()
        .map(|i| {
            let seed = episode_seed(base_seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut setup, c) = sample_setup(protocol, &mut rng);
            if sim.accel_noise_std > 0.0 {
                setup.sensor_seed = Some(splitmix64(seed ^ 0x5EED));
            }
            let stats = run_episode(kind, ctl, sim, &setup, nets, None)?;
            Ok(EpisodeRecord {
                episode: i,
                seed,
                controller: kind.name(),
                delta,
                size_factor: c,
                mass: setup.params.mass,
                arm_length: setup.params.arm_length,
                max_motor_speed: setup.params.max_motor_speed,
                disturbed: setup.disturbance.is_some(),
                stats,
            })
        })
        .collect()
}

/// The standard benchmark: every requested controller over the same seeded
/// episode set.
pub fn run_benchmark(
    cfg: &RunConfig,
    kinds: &[ControllerKind],
    episodes: usize,
    base_seed: u64,
    nets: Option<&PolicyNets>,
) -> Result<(Vec<EpisodeRecord>, Vec<Aggregate>), String> {
    let ctl = cfg.control_config();
    let sim = cfg.sim_config();
    let protocol = EpisodeProtocol::benchmark(cfg);
    let mut records = Vec::new();
    let mut aggregates = Vec::new();
    for &kind in kinds {
        let rows = run_batch(kind, &ctl, &sim, &protocol, episodes, base_seed, None, nets)?;
        aggregates.push(aggregate(kind.name(), None, &rows));
        records.extend(rows);
    }
    Ok((records, aggregates))
}

/// The size-factor sweep: every controller at every half-width, same
/// episode seeds at each sweep point.
pub fn run_sweep(
    cfg: &RunConfig,
    kinds: &[ControllerKind],
    deltas: &[f64],
    episodes: usize,
    base_seed: u64,
    nets: Option<&PolicyNets>,
) -> Result<(Vec<EpisodeRecord>, Vec<Aggregate>), String> {
    let ctl = cfg.control_config();
    let sim = cfg.sim_config();
    let mut records = Vec::new();
    let mut aggregates = Vec::new();
    for &delta in deltas {
        let protocol = EpisodeProtocol::sweep(cfg, delta);
        for &kind in kinds {
            let rows = run_batch(
                kind,
                &ctl,
                &sim,
                &protocol,
                episodes,
                base_seed,
                Some(delta),
                nets,
            )?;
            aggregates.push(aggregate(kind.name(), Some(delta), &rows));
            records.extend(rows);
        }
    }
    Ok((records, aggregates))
}
