//! Monte-Carlo rollouts of a policy under the nominal transitions.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MarkovGameSpec, PolicyProfile};
use crate::error::Result;

/// One sampled episode: `states` has `H + 1` entries, `actions` and
/// `rewards` one per step.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    /// `rewards[h][i]`.
    pub rewards: Vec<Vec<f64>>,
}

/// Sample mean and its standard error.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MonteCarloValue {
    pub mean: f64,
    pub std_error: f64,
}

fn draw(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Plays one episode from `start`.
pub fn sample_trajectory(
    game: &MarkovGameSpec,
    policy: &PolicyProfile,
    start: usize,
    rng: &mut impl Rng,
) -> Trajectory {
    let n = game.players();
    let mut s = start;
    let mut out = Trajectory {
        states: vec![s],
        actions: Vec::with_capacity(game.horizon()),
        rewards: Vec::with_capacity(game.horizon()),
    };
    let mut acts = vec![0; n];
    for h in 0..game.horizon() {
        for (i, a) in acts.iter_mut().enumerate() {
            *a = draw(rng, policy.strategy(i, h, s).probs());
        }
        let j = game.joint_index(&acts);
        out.rewards
            .push((0..n).map(|i| game.reward(i, h, s, j)).collect());
        let row = game.transition(h, s, j);
        s = row.next[draw(rng, &row.prob)];
        out.actions.push(j);
        out.states.push(s);
    }
    out
}

/// Random generator for rollout `k` under a master seed. Streams are
/// independent, so results do not depend on scheduling.
pub(crate) fn rollout_rng(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

/// Risk-neutral expected cumulative reward of each player from the initial
/// state, estimated from `rollouts` episodes.
pub fn monte_carlo_value(
    game: &MarkovGameSpec,
    policy: &PolicyProfile,
    rollouts: usize,
    seed: u64,
) -> Result<Vec<MonteCarloValue>> {
    policy.check(game)?;
    let n = game.players();
    let returns: Vec<Vec<f64>> = (0..rollouts as u64)
        .into_par_iter()
        .map(|k| {
            let t = sample_trajectory(
                game,
                policy,
                game.initial_state(),
                &mut rollout_rng(seed, k),
            );
            (0..n)
                .map(|i| t.rewards.iter().map(|r| r[i]).sum())
                .collect()
        })
        .collect();
    let m = rollouts.max(1) as f64;
    Ok((0..n)
        .map(|i| {
            let mean = returns.iter().map(|r| r[i]).sum::<f64>() / m;
            let var =
                returns.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
            MonteCarloValue {
                mean,
                std_error: (var / m).sqrt(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::tests::chain;
    use super::super::{evaluate_policy, MarkovParameters};
    use super::*;
    use crate::matrix::RationalitySpec;
    use crate::risk::RiskSpec;

    #[test]
    fn risk_neutral_limit_matches_rollouts() {
        let g = chain(3);
        let g = g
            .with_params(MarkovParameters::uniform(
                2,
                RiskSpec::kl(1e-6),
                RiskSpec::kl(1e-6),
                RationalitySpec::log_barrier(1e-6),
            ))
            .unwrap();
        let pol = PolicyProfile::uniform(&g);
        let t = evaluate_policy(&g, &pol).unwrap();
        let mc = monte_carlo_value(&g, &pol, 20_000, 3).unwrap();
        for i in 0..2 {
            let v = t.v[i][0][g.initial_state()];
            assert!(
                (v + mc[i].mean).abs() <= 3.0 * mc[i].std_error + 1e-4,
                "{v} {:?}",
                mc[i]
            );
        }
    }

    #[test]
    fn rollouts_are_reproducible() {
        let g = chain(4);
        let pol = PolicyProfile::uniform(&g);
        let a = monte_carlo_value(&g, &pol, 500, 11).unwrap();
        let b = monte_carlo_value(&g, &pol, 500, 11).unwrap();
        assert_eq!(a[0].mean, b[0].mean);
    }
}
