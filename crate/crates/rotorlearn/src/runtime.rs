//! Deployment-side policy execution.
//!
//! The runtime owns the rolling state-action history, evaluates the latent
//! (from the history encoder in student mode, from the privileged encoder
//! in teacher mode), and runs the policy mean deterministically. It also
//! records the latent trace so disturbance reactions can be inspected.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, Vector4};

use rotorctl::HighLevelCommand;
use rotorsim::Observation;

use crate::features::{raw_state, HIST_FEAT, HIST_LEN, X_DIM};
use crate::nets::PolicyNets;

/// Fixed-capacity rolling window of normalized state-action pairs,
/// zero-initialized so the policy is well-defined from the first step.
#[derive(Debug, Clone)]
pub struct StateActionHistory {
    buf: VecDeque<[f64; HIST_FEAT]>,
}

impl Default for StateActionHistory {
    fn default() -> Self {
        Self::new()
    }
}

impl StateActionHistory {
    pub fn new() -> Self {
        let mut buf = VecDeque::with_capacity(HIST_LEN);
        buf.resize(HIST_LEN, [0.0; HIST_FEAT]);
        Self { buf }
    }

    /// Append the newest pair, evicting the oldest.
    pub fn push(&mut self, x: &DVector<f64>, action_norm: &Vector4<f64>) {
        assert_eq!(x.len(), X_DIM);
        let mut row = [0.0; HIST_FEAT];
        row[..X_DIM].copy_from_slice(x.as_slice());
        row[X_DIM..].copy_from_slice(action_norm.as_slice());
        self.buf.pop_front();
        self.buf.push_back(row);
    }

    /// Feature-by-time matrix, oldest step in the first column.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(HIST_FEAT, HIST_LEN, |r, c| self.buf[c][r])
    }

    pub fn clear(&mut self) {
        for row in self.buf.iter_mut() {
            *row = [0.0; HIST_FEAT];
        }
    }
}

/// Where the latent comes from.
#[derive(Debug, Clone)]
enum LatentSource {
    /// History encoder (the deployable configuration).
    History,
    /// Privileged encoder on a stored normalized environment vector.
    Privileged(DVector<f64>),
}

/// Stateful executor of a trained policy on one episode.
pub struct PolicyRuntime {
    nets: PolicyNets,
    history: StateActionHistory,
    source: LatentSource,
    max_motor_speed: f64,
    z_trace: Vec<(f64, DVector<f64>)>,
    t: f64,
    dt: f64,
}

impl PolicyRuntime {
    /// Student mode: the latent is estimated from history alone.
    pub fn student(nets: PolicyNets, max_motor_speed: f64, dt: f64) -> Self {
        assert!(
            !nets.is_end_to_end(),
            "the end-to-end ablation has no history encoder"
        );
        Self {
            nets,
            history: StateActionHistory::new(),
            source: LatentSource::History,
            max_motor_speed,
            z_trace: Vec::new(),
            t: 0.0,
            dt,
        }
    }

    /// Teacher mode: the latent comes from the privileged encoder applied
    /// to the environment vector.
    pub fn teacher(nets: PolicyNets, max_motor_speed: f64, dt: f64, e_raw: &DVector<f64>) -> Self {
        let e = nets.e_norm.normalize(e_raw);
        Self {
            nets,
            history: StateActionHistory::new(),
            source: LatentSource::Privileged(e),
            max_motor_speed,
            z_trace: Vec::new(),
            t: 0.0,
            dt,
        }
    }

    /// Refresh the privileged vector after an environment change. A no-op
    /// in student mode, which must discover the change from history.
    pub fn set_environment(&mut self, e_raw: &DVector<f64>) {
        if let LatentSource::Privileged(e) = &mut self.source {
            *e = self.nets.e_norm.normalize(e_raw);
        }
    }

    pub fn history_matrix(&self) -> DMatrix<f64> {
        self.history.as_matrix()
    }

    pub fn latent(&self) -> DVector<f64> {
        match &self.source {
            LatentSource::History => self.nets.phi.forward(&self.history.as_matrix()).z.clone(),
            LatentSource::Privileged(e) => self.nets.mu.infer(e),
        }
    }

    /// One control step from a raw (unnormalized) state vector. Returns the
    /// per-motor action in [0, 1]; multiply by the speed limit for rad/s.
    pub fn step_from_raw(&mut self, x_raw: &DVector<f64>) -> Vector4<f64> {
        let x = self.nets.x_norm.normalize(x_raw);
        let z = self.latent();
        let y = self.nets.pi.infer(&self.nets.policy_input(&x, &z));
        let a = PolicyNets::action_norm(&y);
        if !self.nets.is_end_to_end() {
            self.history.push(&x, &a);
        }
        self.z_trace.push((self.t, z));
        self.t += self.dt;
        a
    }

    /// One control step from an observation and high-level command; returns
    /// motor speeds in rad/s.
    pub fn step(&mut self, cmd: &HighLevelCommand, obs: &Observation) -> Vector4<f64> {
        let a = self.step_from_raw(&raw_state(obs, cmd));
        a * self.max_motor_speed
    }

    pub fn max_motor_speed(&self) -> f64 {
        self.max_motor_speed
    }

    /// Latent value at every executed step.
    pub fn z_trace(&self) -> &[(f64, DVector<f64>)] {
        &self.z_trace
    }
}

/// Indices of latent components whose windowed mean moved by more than 10%
/// across `t_event`, comparing the `window` seconds before and after.
pub fn shifted_components(trace: &[(f64, DVector<f64>)], t_event: f64, window: f64) -> Vec<usize> {
    let dims = match trace.first() {
        Some((_, z)) => z.len(),
        None => return Vec::new(),
    };
    let mut pre = DVector::zeros(dims);
    let mut post = DVector::zeros(dims);
    let (mut n_pre, mut n_post) = (0.0, 0.0);
    for (t, z) in trace {
        if *t >= t_event - window && *t < t_event {
            pre += z;
            n_pre += 1.0;
        } else if *t > t_event && *t <= t_event + window {
            post += z;
            n_post += 1.0;
        }
    }
    if n_pre == 0.0 || n_post == 0.0 {
        return Vec::new();
    }
    pre /= n_pre;
    post /= n_post;
    (0..dims)
        .filter(|&i| (post[i] - pre[i]).abs() > 0.10 * pre[i].abs().max(1e-3))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ENV_DIM;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rotornn::{AffineNormalizer, Parameterized};

    #[test]
    fn history_starts_zeroed_and_evicts_oldest_first() {
        let mut h = StateActionHistory::new();
        assert_eq!(h.as_matrix().norm(), 0.0);
        for k in 0..HIST_LEN + 5 {
            let x = DVector::repeat(X_DIM, k as f64);
            h.push(&x, &Vector4::repeat(k as f64));
        }
        let m = h.as_matrix();
        assert_eq!(m.ncols(), HIST_LEN);
        // Oldest surviving entry is push number 5, newest is the last.
        assert_eq!(m[(0, 0)], 5.0);
        assert_eq!(m[(0, HIST_LEN - 1)], (HIST_LEN + 4) as f64);
        assert_eq!(m[(HIST_FEAT - 1, HIST_LEN - 1)], (HIST_LEN + 4) as f64);
    }

    #[test]
    fn student_equals_teacher_when_the_encoders_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut nets = PolicyNets::new(AffineNormalizer::identity(ENV_DIM), &mut rng);
        let e_raw = DVector::from_fn(ENV_DIM, |i, _| (i as f64 * 0.21).sin());
        let z_target = nets.teacher_latent(&e_raw);
        // Force the history encoder to output exactly the teacher latent.
        let zeros = vec![0.0; nets.phi.param_count()];
        let mut off = 0;
        nets.phi.import_params(&zeros, &mut off);
        nets.phi.head.b.copy_from(&z_target);

        let mut student = PolicyRuntime::student(nets.clone(), 1000.0, 0.002);
        let mut teacher = PolicyRuntime::teacher(nets, 1000.0, 0.002, &e_raw);
        for k in 0..50 {
            let x_raw = DVector::from_fn(X_DIM, |i, _| ((i + k) as f64 * 0.17).cos());
            let a = student.step_from_raw(&x_raw);
            let b = teacher.step_from_raw(&x_raw);
            assert_eq!(a, b, "diverged at step {k}");
        }
        let (_, z) = &student.z_trace()[10];
        assert_eq!(z, &z_target);
    }

    #[test]
    fn latent_trace_flags_a_step_change() {
        let mut trace = Vec::new();
        for k in 0..2000 {
            let t = k as f64 * 0.002;
            let mut z = DVector::from_column_slice(&[0.5, -1.0, 0.0]);
            if t > 2.0 {
                z[0] = 1.0;
            }
            trace.push((t, z));
        }
        let shifted = shifted_components(&trace, 2.0, 0.5);
        assert_eq!(shifted, vec![0]);
    }

    #[test]
    fn empty_windows_flag_nothing() {
        let trace = vec![(0.0, DVector::from_column_slice(&[1.0]))];
        assert!(shifted_components(&trace, 5.0, 0.5).is_empty());
    }
}
