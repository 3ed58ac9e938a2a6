//! Step reward for low-level policy training.
//!
//! The reward never references position: tracking quality is paid for
//! through how faithfully the low-level loop realizes the commanded
//! collective thrust and torque, plus an action-smoothness cost and a small
//! per-step survival bonus. Crashes are punished only through the loss of
//! future survival reward.

use nalgebra::{Vector3, Vector4};

/// Weights of the four reward components. All default to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub smooth: f64,
    pub survive: f64,
    pub thrust: f64,
    pub tracking: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            smooth: 1.0,
            survive: 1.0,
            thrust: 1.0,
            tracking: 1.0,
        }
    }
}

/// Which rotational tracking error the reward penalizes. The torque form is
/// the default; the angular-velocity form exists for the reward ablation
/// and is compared through [`RewardTerms::comparable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrackingTerm {
    #[default]
    Torque,
    AngVel,
}

/// Decomposition of one step's reward. `total` is exactly the sum of the
/// four components; `comparable` excludes the rotational tracking term so
/// runs trained with different [`TrackingTerm`] variants can be compared on
/// identical footing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardTerms {
    pub smooth: f64,
    pub survive: f64,
    pub thrust: f64,
    pub tracking: f64,
    pub total: f64,
    pub comparable: f64,
}

/// Inputs to [`step_reward`] gathered after the action has been applied.
#[derive(Debug, Clone, Copy)]
pub struct RewardInputs {
    /// Action and previous action, both normalized to [0, 1] by the
    /// vehicle's maximum motor speed.
    pub action: Vector4<f64>,
    pub prev_action: Vector4<f64>,
    /// Realized and commanded mass-normalized collective thrust.
    pub c_sigma: f64,
    pub c_sigma_des: f64,
    /// Realized rotor torque and the torque the rate loop would demand,
    /// both computed with the vehicle's true parameters.
    pub tau: Vector3<f64>,
    pub tau_des: Vector3<f64>,
    /// Realized and commanded body rate (used by the ablation variant).
    pub omega: Vector3<f64>,
    pub omega_des: Vector3<f64>,
}

pub fn step_reward(w: &RewardWeights, term: TrackingTerm, dt: f64, inp: &RewardInputs) -> RewardTerms {
    let smooth = -w.smooth * (inp.action - inp.prev_action).norm();
    let survive = w.survive * dt;
    let thrust = -w.thrust * (inp.c_sigma - inp.c_sigma_des).abs();
    let tracking = match term {
        TrackingTerm::Torque => -w.tracking * (inp.tau - inp.tau_des).norm(),
        TrackingTerm::AngVel => -w.tracking * (inp.omega - inp.omega_des).norm(),
    };
    let total = smooth + survive + thrust + tracking;
    RewardTerms {
        smooth,
        survive,
        thrust,
        tracking,
        total,
        comparable: total - tracking,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn perfect() -> RewardInputs {
        RewardInputs {
            action: Vector4::repeat(0.5),
            prev_action: Vector4::repeat(0.5),
            c_sigma: 9.81,
            c_sigma_des: 9.81,
            tau: Vector3::zeros(),
            tau_des: Vector3::zeros(),
            omega: Vector3::zeros(),
            omega_des: Vector3::zeros(),
        }
    }

    #[test]
    fn perfect_tracking_earns_the_survival_bonus() {
        let r = step_reward(&RewardWeights::default(), TrackingTerm::Torque, 0.002, &perfect());
        assert_relative_eq!(r.total, 0.002, epsilon = 1e-15);
        assert_relative_eq!(r.comparable, 0.002, epsilon = 1e-15);
    }

    #[test]
    fn unit_thrust_error_costs_one() {
        let mut inp = perfect();
        inp.c_sigma = 10.81;
        let r = step_reward(&RewardWeights::default(), TrackingTerm::Torque, 0.002, &inp);
        assert_relative_eq!(r.total, 0.002 - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn terms_sum_to_total_and_comparable_drops_tracking() {
        let inp = RewardInputs {
            action: Vector4::new(0.2, 0.4, 0.6, 0.8),
            prev_action: Vector4::new(0.25, 0.35, 0.65, 0.75),
            c_sigma: 9.0,
            c_sigma_des: 10.0,
            tau: Vector3::new(0.01, -0.02, 0.005),
            tau_des: Vector3::new(0.0, 0.0, 0.0),
            omega: Vector3::new(1.0, 0.0, 0.0),
            omega_des: Vector3::new(0.0, 0.0, 0.0),
        };
        for term in [TrackingTerm::Torque, TrackingTerm::AngVel] {
            let r = step_reward(&RewardWeights::default(), term, 0.002, &inp);
            assert_relative_eq!(
                r.total,
                r.smooth + r.survive + r.thrust + r.tracking,
                epsilon = 1e-15
            );
            assert_relative_eq!(r.comparable, r.total - r.tracking, epsilon = 1e-15);
        }
        // The two variants agree once the varied term is excluded.
        let a = step_reward(&RewardWeights::default(), TrackingTerm::Torque, 0.002, &inp);
        let b = step_reward(&RewardWeights::default(), TrackingTerm::AngVel, 0.002, &inp);
        assert_relative_eq!(a.comparable, b.comparable, epsilon = 1e-15);
    }

    #[test]
    fn weights_scale_their_terms() {
        let mut inp = perfect();
        inp.omega = Vector3::new(0.0, 2.0, 0.0);
        let w = RewardWeights {
            smooth: 1.0,
            survive: 3.0,
            thrust: 1.0,
            tracking: 0.5,
        };
        let r = step_reward(&w, TrackingTerm::AngVel, 0.002, &inp);
        assert_relative_eq!(r.survive, 0.006, epsilon = 1e-15);
        assert_relative_eq!(r.tracking, -1.0, epsilon = 1e-15);
    }
}
