//! Training ablations: the blended imitation-plus-reinforcement recipe
//! against imitation alone, reinforcement alone, and an end-to-end policy
//! that must learn the outer loop too. All variants share the seed and the
//! environment-step budget, so their learning curves are comparable.

use std::path::Path;

use serde::Serialize;

use rotorlearn::{phase1::write_curves, InputMode, TrainMode};

use crate::config::RunConfig;
use crate::pipeline::run_phase1;

pub const VARIANTS: [(&str, TrainMode, InputMode); 4] = [
    ("blended", TrainMode::Blended, InputMode::Cascade),
    ("il-only", TrainMode::IlOnly, InputMode::Cascade),
    ("rl-only", TrainMode::RlOnly, InputMode::Cascade),
    ("end-to-end", TrainMode::Blended, InputMode::EndToEnd),
];

/// One ablation variant's end-of-training scores.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: String,
    /// Mean fraction of the episode survived, over the last tenth of
    /// training.
    pub tail_norm_length: f64,
    /// Per-episode reward averaged over the final epoch.
    pub final_reward: f64,
    pub epochs: usize,
    pub env_steps: usize,
}

/// Train every variant and drop one learning-curve CSV per variant into
/// `out_dir`. Returns summary rows in declaration order.
pub fn run_ablations(
    cfg: &RunConfig,
    seed: u64,
    out_dir: &Path,
    progress: &mut dyn FnMut(&str),
) -> Result<Vec<AblationRow>, Box<dyn std::error::Error>> {
    let mut rows = Vec::new();
    for (name, mode, input) in VARIANTS {
        progress(&format!("training variant {name}"));
        let result = run_phase1(cfg, mode, input, seed)?;
        write_curves(&result.curve, out_dir.join(format!("curves_{name}.csv")))?;
        let last = result.curve.last();
        rows.push(AblationRow {
            variant: name.to_string(),
            tail_norm_length: result.tail_norm_length(),
            final_reward: last.map_or(0.0, |r| r.reward),
            epochs: result.curve.len(),
            env_steps: last.map_or(0, |r| r.env_steps),
        });
    }
    Ok(rows)
}
