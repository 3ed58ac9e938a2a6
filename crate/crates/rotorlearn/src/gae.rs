//! Generalized advantage estimation over one complete episode.

/// Compute advantages and value targets for a single episode.
///
/// `values[t]` is the critic's estimate at step `t`; `bootstrap` is the
/// estimate at the state after the last step and must be zero when the
/// episode ended in a terminal state (crash) rather than at the time limit.
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len());
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lambda_one_is_discounted_monte_carlo() {
        // Three steps, hand-computed discounted tails with a bootstrap.
        let rewards = [1.0, -0.5, 2.0];
        let values = [0.3, 0.1, -0.2];
        let (gamma, boot) = (0.9, 0.7);
        let (adv, ret) = gae(&rewards, &values, boot, gamma, 1.0);
        let g2 = 2.0 + gamma * boot;
        let g1 = -0.5 + gamma * g2;
        let g0 = 1.0 + gamma * g1;
        assert_relative_eq!(ret[0], g0, epsilon = 1e-12);
        assert_relative_eq!(ret[1], g1, epsilon = 1e-12);
        assert_relative_eq!(ret[2], g2, epsilon = 1e-12);
        assert_relative_eq!(adv[0], g0 - 0.3, epsilon = 1e-12);
    }

    #[test]
    fn lambda_zero_is_the_one_step_td_error() {
        let rewards = [1.0, 1.0];
        let values = [2.0, 3.0];
        let (adv, _) = gae(&rewards, &values, 4.0, 0.5, 0.0);
        assert_relative_eq!(adv[0], 1.0 + 0.5 * 3.0 - 2.0, epsilon = 1e-12);
        assert_relative_eq!(adv[1], 1.0 + 0.5 * 4.0 - 3.0, epsilon = 1e-12);
    }

    #[test]
    fn terminal_episode_ignores_future_value() {
        let rewards = [0.0];
        let values = [5.0];
        let (adv, ret) = gae(&rewards, &values, 0.0, 0.99, 0.95);
        assert_relative_eq!(adv[0], -5.0, epsilon = 1e-12);
        assert_relative_eq!(ret[0], 0.0, epsilon = 1e-12);
    }
}
