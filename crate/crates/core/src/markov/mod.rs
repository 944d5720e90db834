//! Finite-horizon Markov games with risk-averse, boundedly rational players.
//!
//! Values are losses: `V_{i,h}(s)` is player `i`'s risk-averse loss-to-go and
//! `Q_{i,h}(s, a)` the risk-adjusted stage payoff fed to the matrix solver.

mod induction;
mod operator;
mod rollout;

pub use induction::{
    backward_induction, evaluate_policy, markov_rqe_gap, stage_game, stage_tractability, GapTable,
    MarkovSolveReport, PolicyProfile, ValueTables,
};
pub use operator::{env_risk_operator, policy_risk_operator};
pub(crate) use rollout::rollout_rng;
pub use rollout::{monte_carlo_value, sample_trajectory, MonteCarloValue, Trajectory};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};
use crate::matrix::{RationalitySpec, RiskMode};
use crate::risk::RiskSpec;
use crate::simplex::SUM_TOLERANCE;

/// How the continuation value enters the environment risk operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecursionMode {
    /// The continuation enters as utility `-V_{h+1}`, so the adversarial
    /// transition minimizes utility-to-go.
    #[default]
    UtilityConsistent,
    /// The loss-to-go `V_{h+1}` is added to the reward unchanged.
    PaperLiteral,
}

/// Next-state distribution stored by its support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRow {
    pub next: Vec<usize>,
    pub prob: Vec<f64>,
}

impl TransitionRow {
    pub fn deterministic(next: usize) -> Self {
        Self {
            next: vec![next],
            prob: vec![1.0],
        }
    }

    /// Keeps the strictly positive entries of a dense distribution.
    pub fn from_dense(p: &[f64]) -> Self {
        let mut row = Self {
            next: Vec::new(),
            prob: Vec::new(),
        };
        for (s, &v) in p.iter().enumerate() {
            if v > 0.0 {
                row.next.push(s);
                row.prob.push(v);
            }
        }
        row
    }

    pub fn to_dense(&self, states: usize) -> Vec<f64> {
        let mut out = vec![0.0; states];
        for (&s, &p) in self.next.iter().zip(&self.prob) {
            out[s] += p;
        }
        out
    }

    pub fn expect(&self, values: &[f64]) -> f64 {
        self.next
            .iter()
            .zip(&self.prob)
            .map(|(&s, &p)| p * values[s])
            .sum()
    }

    pub(crate) fn validate(&self, states: usize) -> std::result::Result<(), String> {
        if self.next.len() != self.prob.len() || self.next.is_empty() {
            return Err("support and probabilities must be non-empty and of equal length".into());
        }
        let mut seen = std::collections::HashSet::new();
        for (&s, &p) in self.next.iter().zip(&self.prob) {
            if s >= states {
                return Err(format!("next state {s} out of range ({states} states)"));
            }
            if !seen.insert(s) {
                return Err(format!("next state {s} listed twice"));
            }
            if !(p >= 0.0 && p.is_finite()) {
                return Err(format!("invalid probability {p}"));
            }
        }
        let total: f64 = self.prob.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(format!("probabilities sum to {total}"));
        }
        Ok(())
    }
}

/// Horizon, state space, rewards and transitions of a Markov game.
///
/// `rewards[l][i][s * J + a]` and `transitions[l][s * J + a]`, where `J` is
/// the number of joint actions and `a` the row-major joint-action index. Each
/// of the two lists holds either one layer per step or a single layer reused
/// at every step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarkovDynamics {
    pub horizon: usize,
    pub states: usize,
    pub action_counts: Vec<usize>,
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub transitions: Vec<Vec<TransitionRow>>,
    #[serde(default)]
    pub initial_state: usize,
}

/// Risk and rationality parameters of every player.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarkovParameters {
    pub env_risk: Vec<RiskSpec>,
    pub pol_risk: Vec<RiskSpec>,
    pub rationality: Vec<RationalitySpec>,
    #[serde(default)]
    pub risk_mode: RiskMode,
    #[serde(default)]
    pub recursion_mode: RecursionMode,
}

impl MarkovParameters {
    /// The same risk and rationality settings for all `n` players.
    pub fn uniform(n: usize, env: RiskSpec, pol: RiskSpec, rationality: RationalitySpec) -> Self {
        Self {
            env_risk: vec![env; n],
            pol_risk: vec![pol; n],
            rationality: vec![rationality; n],
            risk_mode: RiskMode::Aggregate,
            recursion_mode: RecursionMode::UtilityConsistent,
        }
    }
}

/// A validated finite-horizon Markov game.
#[derive(Clone, Debug)]
pub struct MarkovGameSpec {
    dynamics: MarkovDynamics,
    params: MarkovParameters,
    joint: usize,
}

impl MarkovGameSpec {
    pub fn new(dynamics: MarkovDynamics, params: MarkovParameters) -> Result<Self> {
        let n = dynamics.action_counts.len();
        if n < 2 {
            return invalid("a Markov game needs at least two players");
        }
        if dynamics.action_counts.contains(&0) {
            return invalid("every player needs at least one action");
        }
        if dynamics.horizon == 0 || dynamics.states == 0 {
            return invalid("horizon and state count must be positive");
        }
        let joint: usize = dynamics.action_counts.iter().product();
        let cells = dynamics.states * joint;
        for (name, layers) in [
            ("reward", dynamics.rewards.len()),
            ("transition", dynamics.transitions.len()),
        ] {
            if layers != 1 && layers != dynamics.horizon {
                return invalid(format!(
                    "{name} layers must number 1 or the horizon {}, got {layers}",
                    dynamics.horizon
                ));
            }
        }
        for (l, layer) in dynamics.rewards.iter().enumerate() {
            check_len(&format!("reward layer {l} players"), n, layer.len())?;
            for (i, r) in layer.iter().enumerate() {
                check_len(&format!("reward layer {l} player {i}"), cells, r.len())?;
                if r.iter().any(|v| !v.is_finite()) {
                    return invalid(format!(
                        "reward layer {l} player {i} has a non-finite entry"
                    ));
                }
            }
        }
        for (l, layer) in dynamics.transitions.iter().enumerate() {
            check_len(&format!("transition layer {l}"), cells, layer.len())?;
            for (c, row) in layer.iter().enumerate() {
                row.validate(dynamics.states).or_else(|e| {
                    invalid(format!(
                        "transition layer {l}, state {}, joint action {}: {e}",
                        c / joint,
                        c % joint
                    ))
                })?;
            }
        }
        if dynamics.initial_state >= dynamics.states {
            return invalid(format!(
                "initial state {} out of range",
                dynamics.initial_state
            ));
        }
        check_len("environment risk specs", n, params.env_risk.len())?;
        check_len("policy risk specs", n, params.pol_risk.len())?;
        check_len("rationality specs", n, params.rationality.len())?;
        for r in params.env_risk.iter().chain(&params.pol_risk) {
            r.validate()?;
        }
        for r in &params.rationality {
            r.validate()?;
        }
        Ok(Self {
            dynamics,
            params,
            joint,
        })
    }

    pub fn players(&self) -> usize {
        self.dynamics.action_counts.len()
    }

    pub fn horizon(&self) -> usize {
        self.dynamics.horizon
    }

    pub fn states(&self) -> usize {
        self.dynamics.states
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.dynamics.action_counts
    }

    pub fn joint_actions(&self) -> usize {
        self.joint
    }

    pub fn initial_state(&self) -> usize {
        self.dynamics.initial_state
    }

    pub fn dynamics(&self) -> &MarkovDynamics {
        &self.dynamics
    }

    pub fn params(&self) -> &MarkovParameters {
        &self.params
    }

    pub fn env_risk(&self) -> &[RiskSpec] {
        &self.params.env_risk
    }

    pub fn pol_risk(&self) -> &[RiskSpec] {
        &self.params.pol_risk
    }

    pub fn rationality(&self) -> &[RationalitySpec] {
        &self.params.rationality
    }

    pub fn recursion_mode(&self) -> RecursionMode {
        self.params.recursion_mode
    }

    pub fn risk_mode(&self) -> RiskMode {
        self.params.risk_mode
    }

    pub fn into_parts(self) -> (MarkovDynamics, MarkovParameters) {
        (self.dynamics, self.params)
    }

    pub fn with_params(&self, params: MarkovParameters) -> Result<Self> {
        Self::new(self.dynamics.clone(), params)
    }

    pub fn with_recursion_mode(mut self, mode: RecursionMode) -> Self {
        self.params.recursion_mode = mode;
        self
    }

    /// Same game with transitions replaced; rewards and parameters are kept.
    pub fn with_transitions(&self, transitions: Vec<Vec<TransitionRow>>) -> Result<Self> {
        let mut d = self.dynamics.clone();
        d.transitions = transitions;
        Self::new(d, self.params.clone())
    }

    /// Row-major index of a joint action.
    pub fn joint_index(&self, actions: &[usize]) -> usize {
        actions
            .iter()
            .zip(&self.dynamics.action_counts)
            .fold(0, |acc, (&a, &n)| acc * n + a)
    }

    pub fn decode_joint(&self, mut j: usize) -> Vec<usize> {
        let mut out = vec![0; self.players()];
        for (slot, &n) in out.iter_mut().zip(&self.dynamics.action_counts).rev() {
            *slot = j % n;
            j /= n;
        }
        out
    }

    fn layer(len: usize, h: usize) -> usize {
        if len == 1 {
            0
        } else {
            h
        }
    }

    /// Reward of player `i` at step `h` (0-based).
    pub fn reward(&self, i: usize, h: usize, s: usize, joint: usize) -> f64 {
        let l = Self::layer(self.dynamics.rewards.len(), h);
        self.dynamics.rewards[l][i][s * self.joint + joint]
    }

    pub fn transition(&self, h: usize, s: usize, joint: usize) -> &TransitionRow {
        let l = Self::layer(self.dynamics.transitions.len(), h);
        &self.dynamics.transitions[l][s * self.joint + joint]
    }

    /// Transition rows of step `h` with one row per `(s, a)` cell, expanding
    /// a stationary layer.
    pub fn transition_layer(&self, h: usize) -> &[TransitionRow] {
        let l = Self::layer(self.dynamics.transitions.len(), h);
        &self.dynamics.transitions[l]
    }

    /// Largest `||P_h(.|s,a) - P'_h(.|s,a)||_1` against another game with the
    /// same state and action spaces.
    pub fn max_l1_distance(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for h in 0..self.horizon() {
            for (a, b) in self
                .transition_layer(h)
                .iter()
                .zip(other.transition_layer(h))
            {
                let mut d = a.to_dense(self.states());
                for (&s, &p) in b.next.iter().zip(&b.prob) {
                    d[s] -= p;
                }
                worst = worst.max(d.iter().map(|v| v.abs()).sum());
            }
        }
        worst
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn chain(horizon: usize) -> MarkovGameSpec {
        let dynamics = MarkovDynamics {
            horizon,
            states: 2,
            action_counts: vec![2, 2],
            rewards: vec![vec![(0..8).map(|k| k as f64 / 8.0).collect(), vec![0.5; 8]]],
            transitions: vec![(0..8)
                .map(|k| TransitionRow {
                    next: vec![0, 1],
                    prob: vec![0.25 + 0.05 * k as f64, 0.75 - 0.05 * k as f64],
                })
                .collect()],
            initial_state: 0,
        };
        MarkovGameSpec::new(
            dynamics,
            MarkovParameters::uniform(
                2,
                RiskSpec::kl(1.0),
                RiskSpec::kl(1.0),
                RationalitySpec::log_barrier(1.0),
            ),
        )
        .unwrap()
    }

    #[test]
    fn joint_index_round_trips() {
        let g = chain(1);
        for j in 0..4 {
            assert_eq!(g.joint_index(&g.decode_joint(j)), j);
        }
        assert_eq!(g.decode_joint(2), vec![1, 0]);
    }

    #[test]
    fn rejects_bad_rows() {
        let g = chain(2);
        let (mut d, p) = g.clone().into_parts();
        d.transitions[0][3].prob = vec![0.5, 0.4];
        let err = MarkovGameSpec::new(d, p.clone()).unwrap_err().to_string();
        assert!(err.contains("state 0, joint action 3"), "{err}");
        let (mut d, _) = g.into_parts();
        d.rewards = vec![d.rewards[0].clone(); 3];
        assert!(MarkovGameSpec::new(d, p).is_err());
    }

    #[test]
    fn l1_distance_of_identical_games_is_zero() {
        let g = chain(3);
        assert_eq!(g.max_l1_distance(&g), 0.0);
    }
}
