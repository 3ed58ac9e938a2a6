//! Wires the run configuration into the two training phases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rotorlearn::{
    fit_env_normalizer, train_phase1, train_phase2, InputMode, Phase1Result, Phase2Result,
    PolicyNets, TrainError, TrainMode,
};

use crate::config::RunConfig;

/// Freshly initialized networks with the environment normalizer fitted to
/// the configured training distribution.
pub fn fresh_nets(cfg: &RunConfig, input: InputMode, seed: u64) -> PolicyNets {
    let e_norm = fit_env_normalizer(
        &cfg.training_ranges(),
        cfg.training.env_norm_samples,
        cfg.training.env_norm_seed,
    );
    // Offset so weight init never shares a stream with the rollout RNG.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_1E55_0000_0001);
    match input {
        InputMode::Cascade => PolicyNets::new(e_norm, &mut rng),
        InputMode::EndToEnd => PolicyNets::new_end_to_end(e_norm, &mut rng),
    }
}

/// Phase 1: joint imitation and reinforcement training of the policy on
/// privileged encodings.
pub fn run_phase1(
    cfg: &RunConfig,
    mode: TrainMode,
    input: InputMode,
    seed: u64,
) -> Result<Phase1Result, TrainError> {
    let mut nets = fresh_nets(cfg, input, seed);
    let mut p1 = cfg.phase1_config(mode, seed);
    p1.env.mode = input;
    train_phase1(&mut nets, &p1)
}

/// Phase 2: fit the history encoder to the frozen teacher's latents on
/// on-policy rollouts.
pub fn run_phase2(
    cfg: &RunConfig,
    nets: &mut PolicyNets,
    seed: u64,
) -> Result<Phase2Result, TrainError> {
    train_phase2(nets, &cfg.phase2_config(seed))
}
