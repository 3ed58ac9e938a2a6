//! One place that can fly every controller through the same episode.
//!
//! The six classical stacks and the two learned variants (history student,
//! privileged teacher) are wrapped behind [`Runner`], so the benchmark,
//! sweep, and single-episode commands all share identical episode mechanics:
//! spawn at the trajectory start, run the cascade at the simulation rate,
//! optionally bolt on a payload mid-flight, and score tracking against the
//! reference.

use nalgebra::{DVector, Vector4};
use rotorctl::{
    Cascade, ControlConfig, GeoAdaptive, HighLevel, HighLevelCommand, HighLevelPid, IndiAdaptive,
    L1HighLevel, L1LowLevel, LowLevel, LowLevelPd,
};
use rotorlearn::{PolicyNets, PolicyRuntime};
use rotorsim::{
    CrashCause, Observation, RefSample, SimConfig, Simulator, Trajectory, VehicleParams,
};

/// An episode succeeds when the vehicle never crashes and never strays more
/// than this far from the reference, in meters.
pub const SUCCESS_POS_ERR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    /// PD cascade evaluated with the true parameters of each vehicle.
    ExpertPd,
    /// Same cascade evaluated with the fixed mid-range parameter belief.
    NominalPd,
    /// Adaptive augmentation below the rate loop.
    L1Low,
    /// Adaptive augmentation above the attitude loop.
    L1High,
    /// Geometric tracking with force and moment estimates.
    GeoA,
    /// Incremental inversion with online effectiveness identification.
    IndiA,
    /// Learned policy conditioned on the history-inferred latent.
    Student,
    /// Learned policy conditioned on the privileged environment encoding.
    Teacher,
}

impl ControllerKind {
    pub const CLASSICAL: [Self; 6] = [
        Self::ExpertPd,
        Self::NominalPd,
        Self::L1Low,
        Self::L1High,
        Self::GeoA,
        Self::IndiA,
    ];

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "expert-pd" => Self::ExpertPd,
            "nominal-pd" => Self::NominalPd,
            "l1-low" => Self::L1Low,
            "l1-high" => Self::L1High,
            "geo" => Self::GeoA,
            "indi" => Self::IndiA,
            "student" => Self::Student,
            "teacher" => Self::Teacher,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ExpertPd => "expert-pd",
            Self::NominalPd => "nominal-pd",
            Self::L1Low => "l1-low",
            Self::L1High => "l1-high",
            Self::GeoA => "geo",
            Self::IndiA => "indi",
            Self::Student => "student",
            Self::Teacher => "teacher",
        }
    }

    pub fn needs_policy(self) -> bool {
        matches!(self, Self::Student | Self::Teacher)
    }
}

/// A controller stack instantiated for one episode.
pub enum Runner {
    Cascade {
        cascade: Cascade,
        /// The expert tracks the true parameters, including mid-episode
        /// changes; every other belief stays fixed.
        track_truth: bool,
    },
    Geo(GeoAdaptive),
    Policy {
        hl: HighLevelPid,
        rt: PolicyRuntime,
        held: HighLevelCommand,
        hl_every: usize,
        steps: usize,
    },
}

impl Runner {
    pub fn build(
        kind: ControllerKind,
        ctl: &ControlConfig,
        sim: &SimConfig,
        params: &VehicleParams,
        nets: Option<&PolicyNets>,
    ) -> Result<Self, String> {
        let nominal = VehicleParams::nominal();
        let latency_steps = sim.latency_steps();
        let pid = || HighLevelPid::new(ctl.highlevel);
        let cascade = |high, low| Runner::Cascade {
            cascade: Cascade::new(high, low, ctl.hl_every, sim.gravity),
            track_truth: false,
        };

        Ok(match kind {
            ControllerKind::ExpertPd => Runner::Cascade {
                cascade: Cascade::new(
                    HighLevel::Pid(HighLevelPid::with_drag_feedforward(ctl.highlevel, params)),
                    LowLevel::Pd {
                        pd: LowLevelPd::new(ctl.rate),
                        params: params.clone(),
                    },
                    ctl.hl_every,
                    sim.gravity,
                ),
                track_truth: true,
            },
            ControllerKind::NominalPd => cascade(
                HighLevel::Pid(pid()),
                LowLevel::Pd {
                    pd: LowLevelPd::new(ctl.rate),
                    params: nominal,
                },
            ),
            ControllerKind::L1Low => cascade(
                HighLevel::Pid(pid()),
                LowLevel::L1(L1LowLevel::new(ctl.l1, nominal, ctl.rate, latency_steps)),
            ),
            ControllerKind::L1High => cascade(
                HighLevel::L1(L1HighLevel::new(
                    ctl.l1,
                    nominal.clone(),
                    ctl.highlevel,
                    ctl.rate,
                )),
                LowLevel::Pd {
                    pd: LowLevelPd::new(ctl.rate),
                    params: nominal,
                },
            ),
            ControllerKind::GeoA => Runner::Geo(GeoAdaptive::new(
                ctl.geo,
                nominal,
                ctl.highlevel,
                ctl.rate,
            )),
            ControllerKind::IndiA => cascade(
                HighLevel::Pid(pid()),
                LowLevel::Indi(IndiAdaptive::new(
                    ctl.indi,
                    nominal,
                    ctl.rate,
                    latency_steps,
                )),
            ),
            ControllerKind::Student | ControllerKind::Teacher => {
                let nets = nets
                    .ok_or_else(|| format!("controller {:?} needs a policy checkpoint", kind.name()))?
                    .clone();
                if nets.is_end_to_end() {
                    return Err(
                        "end-to-end checkpoints bypass the cascade and cannot be benchmarked here"
                            .into(),
                    );
                }
                let rt = if kind == ControllerKind::Student {
                    PolicyRuntime::student(nets, params.max_motor_speed, sim.dt)
                } else {
                    let e = DVector::from_row_slice(&params.env_vector());
                    PolicyRuntime::teacher(nets, params.max_motor_speed, sim.dt, &e)
                };
                Runner::Policy {
                    hl: pid(),
                    rt,
                    held: HighLevelCommand::hover(sim.gravity),
                    hl_every: ctl.hl_every,
                    steps: 0,
                }
            }
        })
    }

    /// Motor speed commands for one low-level step.
    pub fn step(&mut self, obs: &Observation, r: &RefSample, dt: f64) -> Vector4<f64> {
        match self {
            Runner::Cascade { cascade, .. } => {
                let s = cascade.command(obs, r, dt);
                Vector4::new(s[0], s[1], s[2], s[3])
            }
            Runner::Geo(geo) => geo.command(obs, r, dt),
            Runner::Policy {
                hl,
                rt,
                held,
                hl_every,
                steps,
            } => {
                if *steps % *hl_every == 0 {
                    *held = hl.update(obs, r);
                }
                *steps += 1;
                rt.step(held, obs)
            }
        }
    }

    /// Thrust and body-rate setpoint behind the most recent motor command.
    pub fn held_command(&self) -> HighLevelCommand {
        match self {
            Runner::Cascade { cascade, .. } => *cascade.held(),
            Runner::Geo(geo) => *geo.last_command(),
            Runner::Policy { held, .. } => *held,
        }
    }

    /// Tell the runner the plant changed. Only beliefs entitled to the truth
    /// react: the expert's parameter copy and the teacher's encoding.
    pub fn notify_params(&mut self, new_params: &VehicleParams) {
        match self {
            Runner::Cascade {
                cascade,
                track_truth: true,
            } => {
                if let LowLevel::Pd { params, .. } = &mut cascade.low {
                    *params = new_params.clone();
                }
                if let HighLevel::Pid(pid) = &mut cascade.high {
                    pid.set_drag_feedforward(new_params);
                }
            }
            Runner::Policy { rt, .. } => {
                rt.set_environment(&DVector::from_row_slice(&new_params.env_vector()));
            }
            _ => {}
        }
    }

    pub fn policy(&self) -> Option<&PolicyRuntime> {
        match self {
            Runner::Policy { rt, .. } => Some(rt),
            _ => None,
        }
    }
}

/// Everything sampled ahead of one episode.
pub struct EpisodeSetup {
    pub params: VehicleParams,
    pub traj: Trajectory,
    /// Payload attachment: event time and the parameter set afterwards.
    pub disturbance: Option<(f64, VehicleParams)>,
    /// Seed for the thrust sensor noise, when enabled in the sim config.
    pub sensor_seed: Option<u64>,
}

/// Tracking scores for one finished episode.
#[derive(Debug, Clone, Copy)]
pub struct RunStats {
    pub success: bool,
    pub crash: Option<CrashCause>,
    pub end_time: f64,
    pub steps: usize,
    pub max_pos_err: f64,
    pub pos_rmse: f64,
    pub vel_rmse: f64,
    pub thrust_rmse: f64,
    pub rate_rmse: f64,
}

/// One logged simulation step, written by the `simulate` command.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub t: f64,
    pub pos: [f64; 3],
    pub ref_pos: [f64; 3],
    pub pos_err: f64,
    pub c_sigma: f64,
    pub c_sigma_des: f64,
    pub omega: [f64; 3],
    pub omega_des: [f64; 3],
    pub speeds: [f64; 4],
}

fn true_c_sigma(sim: &Simulator) -> f64 {
    let w = &sim.state().motor_speed;
    sim.params().thrust_coeff * w.map(|x| x * x).sum() / sim.params().mass
}

/// Fly `runner` through the episode described by `setup` and score it.
///
/// Tracking errors are measured on the true state, not the delayed
/// measurement the controller sees.
pub fn run_episode_with(
    runner: &mut Runner,
    cfg: &SimConfig,
    setup: &EpisodeSetup,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> RunStats {
    let start = setup.traj.sample(0.0).pos;
    let mut sim = Simulator::new(*cfg, setup.params.clone(), start);
    if let Some(seed) = setup.sensor_seed {
        sim = sim.with_sensor_seed(seed);
    }

    let mut applied = false;
    let mut n = 0usize;
    let mut max_pos_err = 0.0f64;
    let (mut pos_sq, mut vel_sq, mut thrust_sq, mut rate_sq) = (0.0, 0.0, 0.0, 0.0);

    let mut sample = |sim: &Simulator, r: &RefSample, held: &HighLevelCommand| {
        let s = sim.state();
        let pe = (s.pos - r.pos).norm();
        max_pos_err = max_pos_err.max(pe);
        pos_sq += pe * pe;
        vel_sq += (s.vel - r.vel).norm_squared();
        let ct = true_c_sigma(sim);
        thrust_sq += (ct - held.c_sigma_des) * (ct - held.c_sigma_des);
        rate_sq += (s.omega - held.omega_des).norm_squared();
        n += 1;
    };

    while !sim.done() {
        let t = sim.time();
        if let Some((t_event, after)) = &setup.disturbance {
            if !applied && t + 1e-12 >= *t_event {
                sim.set_params(after.clone());
                runner.notify_params(after);
                applied = true;
            }
        }
        let obs = sim.observe();
        let r = setup.traj.sample(t);
        let speeds = runner.step(&obs, &r, cfg.dt);
        let held = runner.held_command();
        sample(&sim, &r, &held);
        if let Some(rows) = trace.as_deref_mut() {
            let s = sim.state();
            rows.push(TraceRow {
                t,
                pos: [s.pos.x, s.pos.y, s.pos.z],
                ref_pos: [r.pos.x, r.pos.y, r.pos.z],
                pos_err: (s.pos - r.pos).norm(),
                c_sigma: true_c_sigma(&sim),
                c_sigma_des: held.c_sigma_des,
                omega: [s.omega.x, s.omega.y, s.omega.z],
                omega_des: [held.omega_des.x, held.omega_des.y, held.omega_des.z],
                speeds: [speeds.x, speeds.y, speeds.z, speeds.w],
            });
        }
        sim.step(&speeds);
    }

    // Score the terminal state as well, against the reference at end time.
    let r_end = setup.traj.sample(sim.time());
    let held = runner.held_command();
    sample(&sim, &r_end, &held);

    let inv = 1.0 / n as f64;
    RunStats {
        success: sim.crashed().is_none() && max_pos_err <= SUCCESS_POS_ERR,
        crash: sim.crashed(),
        end_time: sim.time(),
        steps: n - 1,
        max_pos_err,
        pos_rmse: (pos_sq * inv).sqrt(),
        vel_rmse: (vel_sq * inv).sqrt(),
        thrust_rmse: (thrust_sq * inv).sqrt(),
        rate_rmse: (rate_sq * inv).sqrt(),
    }
}

/// Build the controller and run the episode in one call.
pub fn run_episode(
    kind: ControllerKind,
    ctl: &ControlConfig,
    cfg: &SimConfig,
    setup: &EpisodeSetup,
    nets: Option<&PolicyNets>,
    trace: Option<&mut Vec<TraceRow>>,
) -> Result<RunStats, String> {
    let mut runner = Runner::build(kind, ctl, cfg, &setup.params, nets)?;
    Ok(run_episode_with(&mut runner, cfg, setup, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rotorsim::RefSample;

    fn hover_setup(params: VehicleParams) -> EpisodeSetup {
        let start = RefSample::hover(nalgebra::Vector3::zeros());
        let end = RefSample::hover(nalgebra::Vector3::new(0.5, 0.0, 0.0));
        EpisodeSetup {
            params,
            traj: Trajectory::generate(start, end, 2.0).unwrap(),
            disturbance: None,
            sensor_seed: None,
        }
    }

    #[test]
    fn expert_flies_a_short_translation_cleanly() {
        let cfg = SimConfig::default();
        let ctl = ControlConfig::default();
        let setup = hover_setup(VehicleParams::nominal());
        let stats = run_episode(ControllerKind::ExpertPd, &ctl, &cfg, &setup, None, None).unwrap();
        assert!(stats.success, "expert failed: {stats:?}");
        assert!(stats.max_pos_err < 0.2, "max err {}", stats.max_pos_err);
        assert!(stats.pos_rmse < 0.1);
    }

    #[test]
    fn every_classical_controller_completes_on_the_nominal_vehicle() {
        let cfg = SimConfig::default();
        let ctl = ControlConfig::default();
        for kind in ControllerKind::CLASSICAL {
            let setup = hover_setup(VehicleParams::nominal());
            let stats = run_episode(kind, &ctl, &cfg, &setup, None, None).unwrap();
            assert!(stats.success, "{} failed: {stats:?}", kind.name());
        }
    }

    #[test]
    fn policy_kinds_without_a_checkpoint_are_an_error() {
        let cfg = SimConfig::default();
        let ctl = ControlConfig::default();
        let setup = hover_setup(VehicleParams::nominal());
        assert!(run_episode(ControllerKind::Student, &ctl, &cfg, &setup, None, None).is_err());
    }

    #[test]
    fn controller_names_roundtrip() {
        for kind in [
            ControllerKind::ExpertPd,
            ControllerKind::NominalPd,
            ControllerKind::L1Low,
            ControllerKind::L1High,
            ControllerKind::GeoA,
            ControllerKind::IndiA,
            ControllerKind::Student,
            ControllerKind::Teacher,
        ] {
            assert_eq!(ControllerKind::parse(kind.name()), Some(kind));
        }
        assert_eq!(ControllerKind::parse("warp-drive"), None);
    }

    #[test]
    fn expert_belief_follows_a_payload_event_and_recovers() {
        let cfg = SimConfig::default();
        let ctl = ControlConfig::default();
        let params = VehicleParams::nominal();
        let mut after = params.clone();
        let payload = 0.25 * after.mass;
        let offset = 0.4 * after.arm_length;
        after.mass += payload;
        after.payload_mass += payload;
        after.inertia.y += payload * offset * offset;
        after.inertia.z += payload * offset * offset;
        after.external_torque.y += payload * rotorsim::GRAVITY * offset;

        let mut setup = hover_setup(params);
        setup.disturbance = Some((2.5, after));
        let stats = run_episode(ControllerKind::ExpertPd, &ctl, &cfg, &setup, None, None).unwrap();
        assert!(stats.success, "expert with payload failed: {stats:?}");
        assert!(stats.max_pos_err < 0.5, "max err {}", stats.max_pos_err);
    }
}
