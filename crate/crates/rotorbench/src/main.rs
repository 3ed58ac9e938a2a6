use std::error::Error;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use rotorbench::benchmark::{run_benchmark, run_sweep, sample_setup, EpisodeProtocol};
use rotorbench::episode::{run_episode, ControllerKind};
use rotorbench::report::{
    summary, write_episode_csv, write_json, write_trace_csv, StatsOut, Summary,
};
use rotorbench::{ablate, episode_seed, run_phase1, run_phase2, RunConfig};
use rotorlearn::{phase1::write_curves, InputMode, PolicyNets, TrainMode};
use rotorsim::sample_disturbance;

/// Simulation, benchmarking, and training for the quadrotor
/// adaptive-control study.
#[derive(Parser)]
#[command(name = "rotorbench", version, about)]
struct Cli {
    /// TOML run configuration; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for episode draws and training.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fly one controller through one episode and log the full trace.
    Simulate {
        /// expert-pd | nominal-pd | l1-low | l1-high | geo | indi |
        /// student | teacher
        #[arg(long, default_value = "expert-pd")]
        controller: String,
        /// Reproduce this episode index of a benchmark run with the same
        /// seed.
        #[arg(long, default_value_t = 0)]
        episode: usize,
        /// Draw the vehicle from [0.5 - delta, 0.5 + delta] instead of the
        /// whole table.
        #[arg(long)]
        delta: Option<f64>,
        /// Force a payload attachment at this time, s.
        #[arg(long)]
        payload_time: Option<f64>,
        /// Policy checkpoint, required for the learned controllers.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate controllers over seeded episodes from the vehicle table.
    Benchmark {
        /// Episode count; defaults to the config's [benchmark] section.
        #[arg(long)]
        episodes: Option<usize>,
        /// Controller to include (repeatable); defaults to the config list.
        #[arg(long)]
        controller: Vec<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Success rates across widening size-factor intervals.
    Sweep {
        /// Episodes per sweep point; defaults to the config's [sweep]
        /// section.
        #[arg(long)]
        episodes: Option<usize>,
        /// Sweep half-width (repeatable); defaults to the config list.
        #[arg(long)]
        delta: Vec<f64>,
        #[arg(long)]
        controller: Vec<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train all policy variants on the same budget and compare curves.
    Ablate,
    /// Phase 1: joint imitation and reinforcement training.
    TrainPhase1 {
        /// blended | il-only | rl-only
        #[arg(long, default_value = "blended")]
        mode: String,
        /// Train the end-to-end variant that replaces the outer loop too.
        #[arg(long, default_value_t = false)]
        end_to_end: bool,
    },
    /// Phase 2: fit the history encoder to the trained teacher.
    TrainPhase2 {
        /// Phase-1 checkpoint to continue from.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Benchmark a trained policy (student, optionally the teacher).
    EvalPolicy {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        /// Also evaluate the privileged teacher on the same episodes.
        #[arg(long, default_value_t = false)]
        teacher: bool,
    },
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn parse_controllers(
    flags: &[String],
    fallback: &[String],
) -> Result<Vec<ControllerKind>, Box<dyn Error>> {
    let names = if flags.is_empty() { fallback } else { flags };
    names
        .iter()
        .map(|n| {
            ControllerKind::parse(n).ok_or_else(|| format!("unknown controller {n:?}").into())
        })
        .collect()
}

fn load_policy(
    kinds: &[ControllerKind],
    checkpoint: &Option<PathBuf>,
) -> Result<Option<PolicyNets>, Box<dyn Error>> {
    if !kinds.iter().any(|k| k.needs_policy()) {
        return Ok(None);
    }
    let path = checkpoint
        .as_ref()
        .ok_or("learned controllers need --checkpoint")?;
    Ok(Some(PolicyNets::load(path)?))
}

fn print_aggregates(aggs: &[rotorbench::Aggregate]) {
    for a in aggs {
        let delta = a.delta.map(|d| format!(" delta={d}")).unwrap_or_default();
        let rmse = a
            .pos_rmse
            .map(|v| format!("{v:.3} m"))
            .unwrap_or_else(|| "n/a".into());
        println!(
            "{:<11}{delta}  success {:>3}/{:<3}  pos rmse {rmse}",
            a.controller, a.successes, a.episodes
        );
    }
}

#[derive(Serialize)]
struct SimulateDoc {
    controller: String,
    size_factor: f64,
    disturbed: bool,
    stats: StatsOut,
}

#[derive(Serialize)]
struct Phase1Doc {
    mode: String,
    end_to_end: bool,
    epochs: usize,
    env_steps: usize,
    tail_norm_length: f64,
    final_reward: f64,
}

#[derive(Serialize)]
struct Phase2Doc {
    samples_per_episode_every: usize,
    val_mse: f64,
    zero_mse: f64,
    /// Held-out MSE relative to always predicting zero.
    relative_mse: f64,
}

fn run() -> Result<(), Box<dyn Error>> {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    let hash = cfg.hash();
    std::fs::create_dir_all(&cli.out)?;
    let out: &Path = &cli.out;

    match cli.cmd {
        Cmd::Simulate {
            controller,
            episode,
            delta,
            payload_time,
            checkpoint,
        } => {
            let kind = ControllerKind::parse(&controller)
                .ok_or_else(|| format!("unknown controller {controller:?}"))?;
            let nets = load_policy(&[kind], &checkpoint)?;
            let protocol = match delta {
                Some(d) => EpisodeProtocol::sweep(&cfg, d),
                None => EpisodeProtocol::benchmark(&cfg),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(cli.seed, episode));
            let (mut setup, c) = sample_setup(&protocol, &mut rng);
            if let Some(t) = payload_time {
                let after = sample_disturbance(&setup.params, &protocol.ranges, &mut rng);
                setup.disturbance = Some((t, after));
            }
            let mut trace = Vec::new();
            let stats = run_episode(
                kind,
                &cfg.control_config(),
                &cfg.sim_config(),
                &setup,
                nets.as_ref(),
                Some(&mut trace),
            )?;
            write_trace_csv(out.join("trace.csv"), &trace)?;
            let doc = Summary {
                command: "simulate".into(),
                seed: cli.seed,
                config: hash,
                episodes: 1,
                results: SimulateDoc {
                    controller: kind.name().into(),
                    size_factor: c,
                    disturbed: setup.disturbance.is_some(),
                    stats: StatsOut::from(&stats),
                },
            };
            write_json(out.join("simulate.json"), &doc)?;
            println!(
                "{}: {} after {:.2} s, max error {:.3} m (trace.csv, simulate.json)",
                kind.name(),
                if stats.success { "success" } else { "failure" },
                stats.end_time,
                stats.max_pos_err
            );
        }

        Cmd::Benchmark {
            episodes,
            controller,
            checkpoint,
        } => {
            let kinds = parse_controllers(&controller, &cfg.benchmark.controllers)?;
            let episodes = episodes.unwrap_or(cfg.benchmark.episodes);
            let nets = load_policy(&kinds, &checkpoint)?;
            let (records, aggs) = run_benchmark(&cfg, &kinds, episodes, cli.seed, nets.as_ref())?;
            write_episode_csv(out.join("episodes.csv"), &records, &hash)?;
            write_json(
                out.join("summary.json"),
                &summary("benchmark", cli.seed, &hash, episodes, aggs.clone()),
            )?;
            print_aggregates(&aggs);
        }

        Cmd::Sweep {
            episodes,
            delta,
            controller,
            checkpoint,
        } => {
            let kinds = parse_controllers(&controller, &cfg.benchmark.controllers)?;
            let episodes = episodes.unwrap_or(cfg.sweep.episodes);
            let deltas = if delta.is_empty() {
                cfg.sweep.deltas.clone()
            } else {
                delta
            };
            let nets = load_policy(&kinds, &checkpoint)?;
            let (records, aggs) =
                run_sweep(&cfg, &kinds, &deltas, episodes, cli.seed, nets.as_ref())?;
            write_episode_csv(out.join("sweep.csv"), &records, &hash)?;
            write_json(
                out.join("sweep.json"),
                &summary("sweep", cli.seed, &hash, episodes, aggs.clone()),
            )?;
            print_aggregates(&aggs);
        }

        Cmd::Ablate => {
            let rows = ablate::run_ablations(&cfg, cli.seed, out, &mut |msg| {
                eprintln!("{msg}");
            })?;
            write_json(
                out.join("ablation.json"),
                &Summary {
                    command: "ablate".to_string(),
                    seed: cli.seed,
                    config: hash,
                    episodes: 0,
                    results: rows.clone(),
                },
            )?;
            for r in &rows {
                println!(
                    "{:<11} tail length {:.3}  final reward {:.3}  ({} epochs)",
                    r.variant, r.tail_norm_length, r.final_reward, r.epochs
                );
            }
        }

        Cmd::TrainPhase1 { mode, end_to_end } => {
            let train_mode = match mode.as_str() {
                "blended" => TrainMode::Blended,
                "il-only" => TrainMode::IlOnly,
                "rl-only" => TrainMode::RlOnly,
                other => return Err(format!("unknown mode {other:?}").into()),
            };
            let input = if end_to_end {
                InputMode::EndToEnd
            } else {
                InputMode::Cascade
            };
            eprintln!(
                "phase 1 ({mode}): {} environment steps",
                cfg.phase1.total_steps
            );
            let result = run_phase1(&cfg, train_mode, input, cli.seed)?;
            result.nets.save(out.join("policy.ckpt"))?;
            write_curves(&result.curve, out.join("curves.csv"))?;
            let last = result.curve.last();
            let doc = Summary {
                command: "train-phase1".to_string(),
                seed: cli.seed,
                config: hash,
                episodes: 0,
                results: Phase1Doc {
                    mode,
                    end_to_end,
                    epochs: result.curve.len(),
                    env_steps: last.map_or(0, |r| r.env_steps),
                    tail_norm_length: result.tail_norm_length(),
                    final_reward: last.map_or(0.0, |r| r.reward),
                },
            };
            write_json(out.join("phase1.json"), &doc)?;
            println!(
                "phase 1 done: tail normalized length {:.3} (policy.ckpt, curves.csv)",
                result.tail_norm_length()
            );
        }

        Cmd::TrainPhase2 { checkpoint } => {
            let mut nets = PolicyNets::load(&checkpoint)?;
            if nets.is_end_to_end() {
                return Err("end-to-end checkpoints have no history encoder to fit".into());
            }
            let result = run_phase2(&cfg, &mut nets, cli.seed)?;
            result.nets.save(out.join("student.ckpt"))?;
            let mut curve = String::from("epoch,train_mse,val_mse\n");
            for (e, tr, va) in &result.curve {
                curve.push_str(&format!("{e},{tr},{va}\n"));
            }
            std::fs::write(out.join("encoder_curve.csv"), curve)?;
            let doc = Summary {
                command: "train-phase2".to_string(),
                seed: cli.seed,
                config: hash,
                episodes: cfg.phase2.train_episodes + cfg.phase2.holdout_episodes,
                results: Phase2Doc {
                    samples_per_episode_every: cfg.phase2.subsample,
                    val_mse: result.val_mse,
                    zero_mse: result.zero_mse,
                    relative_mse: result.val_mse / result.zero_mse.max(1e-300),
                },
            };
            write_json(out.join("phase2.json"), &doc)?;
            println!(
                "phase 2 done: held-out latent MSE {:.4} vs zero-predictor {:.4} (student.ckpt)",
                result.val_mse, result.zero_mse
            );
        }

        Cmd::EvalPolicy {
            checkpoint,
            episodes,
            teacher,
        } => {
            let nets = PolicyNets::load(&checkpoint)?;
            let kinds = if teacher {
                vec![ControllerKind::Student, ControllerKind::Teacher]
            } else {
                vec![ControllerKind::Student]
            };
            let episodes = episodes.unwrap_or(cfg.benchmark.episodes);
            let (records, aggs) = run_benchmark(&cfg, &kinds, episodes, cli.seed, Some(&nets))?;
            write_episode_csv(out.join("eval.csv"), &records, &hash)?;
            write_json(
                out.join("eval.json"),
                &summary("eval-policy", cli.seed, &hash, episodes, aggs.clone()),
            )?;
            print_aggregates(&aggs);
        }
    }
    Ok(())
}
