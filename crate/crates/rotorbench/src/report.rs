//! Result files: one CSV row per episode, one JSON summary per run.
//!
//! Floats are written with Rust's shortest-roundtrip formatting and rows
//! are emitted in episode order, so identical configuration and seed
//! produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::episode::TraceRow;
use crate::metrics::{crash_name, Aggregate, EpisodeRecord};

pub const EPISODE_HEADER: &str = "episode,seed,controller,delta,size_factor,mass,arm_length,\
    max_motor_speed,disturbed,success,crash,end_time,steps,max_pos_err,pos_rmse,vel_rmse,\
    thrust_rmse,rate_rmse,config";

pub fn write_episode_csv(
    path: impl AsRef<Path>,
    rows: &[EpisodeRecord],
    config_hash: &str,
) -> std::io::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{EPISODE_HEADER}")?;
    for r in rows {
        let delta = r.delta.map(|d| d.to_string()).unwrap_or_default();
        let s = &r.stats;
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.episode,
            r.seed,
            r.controller,
            delta,
            r.size_factor,
            r.mass,
            r.arm_length,
            r.max_motor_speed,
            r.disturbed as u8,
            s.success as u8,
            crash_name(s.crash),
            s.end_time,
            s.steps,
            s.max_pos_err,
            s.pos_rmse,
            s.vel_rmse,
            s.thrust_rmse,
            s.rate_rmse,
            config_hash,
        )?;
    }
    f.flush()
}

pub fn write_trace_csv(path: impl AsRef<Path>, rows: &[TraceRow]) -> std::io::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(
        f,
        "t,x,y,z,ref_x,ref_y,ref_z,pos_err,c_sigma,c_sigma_des,wx,wy,wz,\
         wx_des,wy_des,wz_des,w1,w2,w3,w4"
    )?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.pos[0],
            r.pos[1],
            r.pos[2],
            r.ref_pos[0],
            r.ref_pos[1],
            r.ref_pos[2],
            r.pos_err,
            r.c_sigma,
            r.c_sigma_des,
            r.omega[0],
            r.omega[1],
            r.omega[2],
            r.omega_des[0],
            r.omega_des[1],
            r.omega_des[2],
            r.speeds[0],
            r.speeds[1],
            r.speeds[2],
            r.speeds[3],
        )?;
    }
    f.flush()
}

/// Episode scores in a serializable shape (crash cause as text).
#[derive(Debug, Clone, Serialize)]
pub struct StatsOut {
    pub success: bool,
    pub crash: String,
    pub end_time: f64,
    pub steps: usize,
    pub max_pos_err: f64,
    pub pos_rmse: f64,
    pub vel_rmse: f64,
    pub thrust_rmse: f64,
    pub rate_rmse: f64,
}

impl From<&crate::episode::RunStats> for StatsOut {
    fn from(s: &crate::episode::RunStats) -> Self {
        Self {
            success: s.success,
            crash: crash_name(s.crash).to_string(),
            end_time: s.end_time,
            steps: s.steps,
            max_pos_err: s.max_pos_err,
            pos_rmse: s.pos_rmse,
            vel_rmse: s.vel_rmse,
            thrust_rmse: s.thrust_rmse,
            rate_rmse: s.rate_rmse,
        }
    }
}

/// Top-level document written next to each episode CSV.
#[derive(Debug, Serialize)]
pub struct Summary<T: Serialize> {
    pub command: String,
    pub seed: u64,
    pub config: String,
    pub episodes: usize,
    pub results: T,
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, doc: &T) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(doc).expect("summary serializes");
    std::fs::write(path, text + "\n")
}

pub fn summary(
    command: &str,
    seed: u64,
    config_hash: &str,
    episodes: usize,
    aggregates: Vec<Aggregate>,
) -> Summary<Vec<Aggregate>> {
    Summary {
        command: command.to_string(),
        seed,
        config: config_hash.to_string(),
        episodes,
        results: aggregates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::RunStats;

    fn record(i: usize) -> EpisodeRecord {
        EpisodeRecord {
            episode: i,
            seed: 1000 + i as u64,
            controller: "expert-pd",
            delta: if i == 0 { None } else { Some(0.5) },
            size_factor: 0.25 * i as f64,
            mass: 0.3875,
            arm_length: 0.123,
            max_motor_speed: 2219.0,
            disturbed: i == 1,
            stats: RunStats {
                success: i != 1,
                crash: if i == 1 {
                    Some(rotorsim::CrashCause::BodyRate)
                } else {
                    None
                },
                end_time: 5.0,
                steps: 2500,
                max_pos_err: 0.1,
                pos_rmse: 0.05,
                vel_rmse: 0.07,
                thrust_rmse: 0.2,
                rate_rmse: 0.3,
            },
        }
    }

    #[test]
    fn episode_csv_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<EpisodeRecord> = (0..3).map(record).collect();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_episode_csv(&p1, &rows, "deadbeef").unwrap();
        write_episode_csv(&p2, &rows, "deadbeef").unwrap();
        let a = std::fs::read(&p1).unwrap();
        let b = std::fs::read(&p2).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("episode,seed,controller"));
        assert!(text.contains(",rate,"), "crash cause column missing");
        assert!(text.lines().all(|l| !l.contains("NaN")));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn summary_serializes_with_stable_keys() {
        let agg = crate::metrics::aggregate("expert-pd", None, &[record(0)]);
        let doc = summary("benchmark", 7, "cafe", 1, vec![agg]);
        let a = serde_json::to_string_pretty(&doc).unwrap();
        let b = serde_json::to_string_pretty(&doc).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"success_rate\": 1.0"));
    }
}
