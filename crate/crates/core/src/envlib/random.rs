//! Seeded random games for tests and experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{MarkovDynamics, MarkovGameSpec, MarkovParameters, TransitionRow};
use crate::matrix::{MatrixGameSpec, PayoffTensor, RationalitySpec, RiskMode};
use crate::risk::RiskSpec;

/// Sizes of a random Markov game.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkovDims {
    pub states: usize,
    pub action_counts: Vec<usize>,
    pub horizon: usize,
}

/// One payoff tensor per player with entries uniform on `[0, 1]`.
pub fn random_payoffs(action_counts: &[usize], seed: u64) -> Result<Vec<PayoffTensor>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells: usize = action_counts.iter().product();
    (0..action_counts.len())
        .map(|_| {
            PayoffTensor::new(
                action_counts.to_vec(),
                (0..cells).map(|_| rng.gen::<f64>()).collect(),
            )
        })
        .collect()
}

pub fn random_matrix_game(
    action_counts: &[usize],
    seed: u64,
    risk: Vec<RiskSpec>,
    rationality: Vec<RationalitySpec>,
) -> Result<MatrixGameSpec> {
    let payoffs = random_payoffs(action_counts, seed)?;
    MatrixGameSpec::new(
        action_counts.to_vec(),
        payoffs,
        risk,
        rationality,
        RiskMode::Aggregate,
    )
}

/// Dirichlet(1) distribution over `states` next states.
pub fn random_row(states: usize, rng: &mut impl Rng) -> TransitionRow {
    if states == 1 {
        return TransitionRow::deterministic(0);
    }
    let d = Dirichlet::new_with_size(1.0, states).expect("Dirichlet over at least two states");
    TransitionRow::from_dense(&d.sample(rng))
}

/// A game with one reward and transition layer per step. Rewards are uniform
/// on `[0, 1]` and every transition row is an independent Dirichlet(1) draw.
pub fn random_markov_dynamics(dims: &MarkovDims, seed: u64) -> Result<MarkovDynamics> {
    if dims.states == 0
        || dims.horizon == 0
        || dims.action_counts.len() < 2
        || dims.action_counts.contains(&0)
    {
        return Err(Error::InvalidInput(format!(
            "invalid random game sizes {dims:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.action_counts.len();
    let cells = dims.states * dims.action_counts.iter().product::<usize>();
    let mut rewards = Vec::with_capacity(dims.horizon);
    let mut transitions = Vec::with_capacity(dims.horizon);
    for _ in 0..dims.horizon {
        rewards.push(
            (0..n)
                .map(|_| (0..cells).map(|_| rng.gen::<f64>()).collect())
                .collect(),
        );
        transitions.push(
            (0..cells)
                .map(|_| random_row(dims.states, &mut rng))
                .collect(),
        );
    }
    Ok(MarkovDynamics {
        horizon: dims.horizon,
        states: dims.states,
        action_counts: dims.action_counts.clone(),
        rewards,
        transitions,
        initial_state: 0,
    })
}

pub fn random_markov_game(
    dims: &MarkovDims,
    seed: u64,
    params: MarkovParameters,
) -> Result<MarkovGameSpec> {
    MarkovGameSpec::new(random_markov_dynamics(dims, seed)?, params)
}
