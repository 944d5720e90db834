//! Computing RQE through no-regret learning in the auxiliary game.

pub mod aux;
pub mod learner;
pub mod xi;

pub use aux::{build_auxiliary, AuxProfile, AuxiliaryGame};
pub use learner::{
    run_no_regret, Initialization, LearnerConfig, LearnerTrajectory, RegretCheckpoint, UpdateRule,
};
pub use xi::{
    action_dependent_xi, check_tractability, concavity_probe, xi_star, xi_star_with, ProbeOutcome,
    TractabilityCondition, TractabilityRecord, XiSearch, XiStar,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{rqe_gap_with, MatrixGameSpec, RiskMode};
use crate::simplex::{MixedStrategy, SimplexMinimizer};

/// Settings for [`solve_rqe`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    #[serde(flatten)]
    pub learner: LearnerConfig,
    /// Halvings of the step size allowed after a divergence.
    pub retries: usize,
    pub gap_iterations: usize,
    pub gap_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            learner: LearnerConfig::default(),
            retries: 6,
            gap_iterations: 100_000,
            gap_tolerance: 1e-10,
        }
    }
}

impl SolverConfig {
    pub fn with_step(mut self, step: f64) -> Self {
        self.learner.step_size = step;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.learner.iterations = iterations;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.learner.seed = seed;
        self
    }

    pub fn gap_minimizer(&self) -> SimplexMinimizer {
        SimplexMinimizer {
            max_iters: self.gap_iterations,
            tolerance: self.gap_tolerance,
        }
    }
}

/// Result of [`solve_rqe`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub strategy: Vec<MixedStrategy>,
    pub adversary: Vec<Vec<f64>>,
    pub gaps: Vec<f64>,
    pub max_gap: f64,
    pub iterations: usize,
    pub step_size: f64,
    pub attempts: usize,
    pub tractability: TractabilityRecord,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trajectory: Option<LearnerTrajectory>,
}

fn failed_record(game: &MatrixGameSpec, err: &Error) -> TractabilityRecord {
    let n = game.players();
    TractabilityRecord {
        condition: match (game.risk_mode(), n) {
            (RiskMode::ActionDependent, _) => TractabilityCondition::ActionDependent,
            (_, 2) => TractabilityCondition::TwoPlayer,
            _ => TractabilityCondition::AggregateNPlayer,
        },
        holds: false,
        margins: vec![],
        xi: vec![vec![None; n]; n],
        numeric: false,
        note: Some(err.to_string()),
    }
}

/// Runs no-regret learning on the auxiliary game and reports the averaged
/// strategies with their RQE gaps in the original game.
///
/// Games that fail the tractability condition are still solved; the report
/// records that no equilibrium guarantee applies.
pub fn solve_rqe(game: &MatrixGameSpec, cfg: &SolverConfig) -> Result<SolveReport> {
    solve_rqe_with(game, cfg, tractability_record(game))
}

/// [`check_tractability`] with failures folded into a record that does not hold.
pub fn tractability_record(game: &MatrixGameSpec) -> TractabilityRecord {
    check_tractability(game).unwrap_or_else(|e| failed_record(game, &e))
}

/// [`solve_rqe`] with a tractability record computed beforehand, for callers
/// solving many games that share parameters and action counts.
pub fn solve_rqe_with(
    game: &MatrixGameSpec,
    cfg: &SolverConfig,
    tractability: TractabilityRecord,
) -> Result<SolveReport> {
    let xi = tractability
        .xi
        .iter()
        .map(|row| row.iter().map(|x| x.unwrap_or(0.0)).collect())
        .collect();
    let aux = AuxiliaryGame::with_xi(game, xi)?;

    let mut learner = cfg.learner.clone();
    let mut attempts = 0;
    let trajectory = loop {
        attempts += 1;
        match run_no_regret(&aux, &learner) {
            Ok(t) => break t,
            Err(Error::Divergence {
                iteration,
                step_size,
            }) if attempts <= cfg.retries => {
                log::warn!(
                    "learner diverged at iteration {iteration} with step {step_size:.3e}; halving"
                );
                learner.step_size *= 0.5;
            }
            Err(e) => return Err(e),
        }
    };

    let strategy: Vec<MixedStrategy> = trajectory
        .averages
        .pi
        .iter()
        .map(|v| {
            let z: f64 = v.iter().sum();
            MixedStrategy::from_vec_unchecked(v.iter().map(|x| x / z).collect())
        })
        .collect();
    let gaps = rqe_gap_with(game, &strategy, &cfg.gap_minimizer())?;
    let max_gap = gaps.iter().copied().fold(0.0, f64::max);
    Ok(SolveReport {
        strategy,
        adversary: trajectory.averages.adversary.clone(),
        gaps,
        max_gap,
        iterations: trajectory.iterations,
        step_size: trajectory.step_size,
        attempts,
        tractability,
        seed: cfg.learner.seed,
        trajectory: if cfg.learner.record_iterates {
            Some(trajectory)
        } else {
            None
        },
    })
}
