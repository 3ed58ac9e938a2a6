//! Per-episode records and their aggregation into the numbers the study
//! reports: success rates and tracking errors, the latter averaged only
//! over successful episodes so a crash cannot masquerade as good tracking.

use serde::Serialize;

use crate::episode::RunStats;
use rotorsim::CrashCause;

#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Derived per-episode seed; together with the config hash this pins
    /// down the vehicle, trajectory, and disturbance draw exactly.
    pub seed: u64,
    pub controller: &'static str,
    /// Sweep half-width the episode was drawn under, when applicable.
    pub delta: Option<f64>,
    pub size_factor: f64,
    pub mass: f64,
    pub arm_length: f64,
    pub max_motor_speed: f64,
    pub disturbed: bool,
    pub stats: RunStats,
}

pub fn crash_name(crash: Option<CrashCause>) -> &'static str {
    match crash {
        None => "",
        Some(CrashCause::HeightLoss) => "height",
        Some(CrashCause::BodyRate) => "rate",
        Some(CrashCause::NonFinite) => "nonfinite",
    }
}

/// One controller's scores over a batch of episodes.
#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub controller: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean tracking errors over successful episodes; absent when every
    /// episode failed.
    pub pos_rmse: Option<f64>,
    pub vel_rmse: Option<f64>,
    pub thrust_rmse: Option<f64>,
    pub rate_rmse: Option<f64>,
    pub mean_max_pos_err: Option<f64>,
    pub crashes_height: usize,
    pub crashes_rate: usize,
    pub crashes_nonfinite: usize,
}

pub fn aggregate(
    controller: &str,
    delta: Option<f64>,
    records: &[EpisodeRecord],
) -> Aggregate {
    let n = records.len();
    let ok: Vec<&EpisodeRecord> = records.iter().filter(|r| r.stats.success).collect();
    let mean = |f: &dyn Fn(&RunStats) -> f64| {
        if ok.is_empty() {
            None
        } else {
            Some(ok.iter().map(|r| f(&r.stats)).sum::<f64>() / ok.len() as f64)
        }
    };
    let count = |c: CrashCause| records.iter().filter(|r| r.stats.crash == Some(c)).count();
    Aggregate {
        controller: controller.to_string(),
        delta,
        episodes: n,
        successes: ok.len(),
        success_rate: if n == 0 { 0.0 } else { ok.len() as f64 / n as f64 },
        pos_rmse: mean(&|s| s.pos_rmse),
        vel_rmse: mean(&|s| s.vel_rmse),
        thrust_rmse: mean(&|s| s.thrust_rmse),
        rate_rmse: mean(&|s| s.rate_rmse),
        mean_max_pos_err: mean(&|s| s.max_pos_err),
        crashes_height: count(CrashCause::HeightLoss),
        crashes_rate: count(CrashCause::BodyRate),
        crashes_nonfinite: count(CrashCause::NonFinite),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(success: bool, crash: Option<CrashCause>, pos_rmse: f64) -> EpisodeRecord {
        EpisodeRecord {
            episode: 0,
            seed: 0,
            controller: "expert-pd",
            delta: None,
            size_factor: 0.5,
            mass: 0.4,
            arm_length: 0.12,
            max_motor_speed: 2500.0,
            disturbed: false,
            stats: RunStats {
                success,
                crash,
                end_time: 5.0,
                steps: 2500,
                max_pos_err: if success { 0.5 } else { 3.0 },
                pos_rmse,
                vel_rmse: pos_rmse,
                thrust_rmse: pos_rmse,
                rate_rmse: pos_rmse,
            },
        }
    }

    #[test]
    fn rmse_averages_exclude_failures() {
        let rows = vec![
            record(true, None, 0.2),
            record(false, Some(CrashCause::HeightLoss), 9.0),
            record(true, None, 0.4),
        ];
        let agg = aggregate("expert-pd", None, &rows);
        assert_eq!(agg.successes, 2);
        assert!((agg.success_rate - 2.0 / 3.0).abs() < 1e-12);
        assert!((agg.pos_rmse.unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(agg.crashes_height, 1);
        assert_eq!(agg.crashes_rate, 0);
    }

    #[test]
    fn all_failed_yields_no_tracking_numbers() {
        let rows = vec![record(false, Some(CrashCause::BodyRate), 1.0)];
        let agg = aggregate("nominal-pd", Some(8.0), &rows);
        assert_eq!(agg.success_rate, 0.0);
        assert!(agg.pos_rmse.is_none());
        assert_eq!(agg.crashes_rate, 1);
    }
}
