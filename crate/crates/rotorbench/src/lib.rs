//! Benchmark harness for the quadrotor adaptive-control study.
//!
//! Everything the command-line tool does is reachable as a library call:
//! parse and hash a [`config::RunConfig`], fly any controller through
//! seeded episodes ([`episode`], [`benchmark`]), train the learned policy
//! ([`pipeline`], [`ablate`]), and write deterministic result files
//! ([`report`]).

pub mod ablate;
pub mod benchmark;
pub mod config;
pub mod episode;
pub mod metrics;
pub mod pipeline;
pub mod report;

pub use benchmark::{episode_seed, run_batch, run_benchmark, run_sweep, EpisodeProtocol, SizeDraw};
pub use config::{ConfigError, RunConfig};
pub use episode::{
    run_episode, run_episode_with, ControllerKind, EpisodeSetup, RunStats, Runner, TraceRow,
    SUCCESS_POS_ERR,
};
pub use metrics::{aggregate, crash_name, Aggregate, EpisodeRecord};
pub use pipeline::{fresh_nets, run_phase1, run_phase2};
