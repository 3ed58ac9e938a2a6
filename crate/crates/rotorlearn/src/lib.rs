//! Training pipeline and runtime for the learned low-level controller.
//!
//! The controller is trained in two phases. Phase one trains a policy that
//! consumes an eight-dimensional latent produced by a privileged encoder of
//! the true vehicle parameters; the objective blends on-policy imitation of
//! the expert cascade with clipped policy-gradient fine-tuning, shifting
//! from imitation to reinforcement on an exponential schedule. Phase two
//! freezes policy and privileged encoder and fits a temporal-convolution
//! module to predict the latent from the recent state-action history, which
//! is all the deployed controller observes.

pub mod features;
pub mod gae;
pub mod nets;
pub mod phase1;
pub mod phase2;
pub mod ppo;
pub mod reward;
pub mod rollout;
pub mod runtime;

pub use features::{
    e2e_normalizer, e2e_raw_state, fit_env_normalizer, raw_state, x_normalizer, ACT_DIM, E2E_X_DIM,
    ENV_DIM, HIST_FEAT, HIST_LEN, X_DIM, Z_DIM,
};
pub use gae::gae;
pub use nets::PolicyNets;
pub use phase1::{train_phase1, EpochRow, Phase1Config, Phase1Result, TrainMode};
pub use phase2::{train_phase2, LatentDataset, Phase2Config, Phase2Result};
pub use ppo::{gaussian_logp, ppo_il_update, sample_action, PpoConfig, PpoStats, RolloutBatch};
pub use reward::{step_reward, RewardInputs, RewardTerms, RewardWeights, TrackingTerm};
pub use rollout::{EnvConfig, InputMode, StepOutcome, TrainEnv};
pub use runtime::{shifted_components, PolicyRuntime, StateActionHistory};

use thiserror::Error;

/// Errors surfaced by the training loops.
#[derive(Debug, Error)]
pub enum TrainError {
    /// A loss or gradient went non-finite; training is aborted rather than
    /// silently continuing from a poisoned state.
    #[error("training diverged at epoch {epoch}: non-finite {what} ({detail})")]
    Diverged {
        epoch: usize,
        what: &'static str,
        detail: String,
    },
    #[error(transparent)]
    Checkpoint(#[from] rotornn::CheckpointError),
    #[error(transparent)]
    Sim(#[from] rotorsim::SimError),
}
