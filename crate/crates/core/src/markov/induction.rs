//! Backward induction over stage games, policy evaluation and the per-state
//! equilibrium gap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::operator::{env_value, EnvScratch};
use super::{MarkovGameSpec, RecursionMode};
use crate::error::{check_len, Error, Result};
use crate::matrix::{rqe_gap_with, MatrixGameSpec, PayoffTensor};
use crate::simplex::MixedStrategy;
use crate::solver::{solve_rqe_with, tractability_record, SolverConfig, TractabilityRecord};

/// Strategies indexed by step, state and player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyProfile {
    steps: Vec<Vec<Vec<MixedStrategy>>>,
}

impl PolicyProfile {
    /// `steps[h][s][i]`.
    pub fn new(steps: Vec<Vec<Vec<MixedStrategy>>>) -> Self {
        Self { steps }
    }

    pub fn uniform(game: &MarkovGameSpec) -> Self {
        let profile: Vec<MixedStrategy> = game
            .action_counts()
            .iter()
            .map(|&a| MixedStrategy::uniform(a))
            .collect();
        Self {
            steps: vec![vec![profile; game.states()]; game.horizon()],
        }
    }

    pub fn at(&self, h: usize, s: usize) -> &[MixedStrategy] {
        &self.steps[h][s]
    }

    pub fn strategy(&self, i: usize, h: usize, s: usize) -> &MixedStrategy {
        &self.steps[h][s][i]
    }

    pub fn steps(&self) -> &[Vec<Vec<MixedStrategy>>] {
        &self.steps
    }

    pub fn set(&mut self, h: usize, s: usize, profile: Vec<MixedStrategy>) {
        self.steps[h][s] = profile;
    }

    pub fn check(&self, game: &MarkovGameSpec) -> Result<()> {
        check_len("policy steps", game.horizon(), self.steps.len())?;
        for (h, layer) in self.steps.iter().enumerate() {
            check_len(
                &format!("policy states at step {h}"),
                game.states(),
                layer.len(),
            )?;
            for (s, prof) in layer.iter().enumerate() {
                check_len(
                    &format!("policy players at step {h}, state {s}"),
                    game.players(),
                    prof.len(),
                )?;
                for (i, p) in prof.iter().enumerate() {
                    check_len(
                        &format!("policy of player {i} at step {h}, state {s}"),
                        game.action_counts()[i],
                        p.len(),
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Largest entrywise difference to another policy of the same shape.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for (a, b) in self
            .steps
            .iter()
            .flatten()
            .zip(other.steps.iter().flatten())
        {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max(x.sup_distance(y));
            }
        }
        worst
    }
}

/// Value tables of a policy. Steps are 0-based; `v[i][H]` is the zero
/// terminal layer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValueTables {
    /// `v[i][h][s]`: risk-averse loss-to-go.
    pub v: Vec<Vec<Vec<f64>>>,
    /// `v_eps[i][h][s] = v[i][h][s] + epsilon_i nu_i(pi_{i,h}(s))`.
    pub v_eps: Vec<Vec<Vec<f64>>>,
    /// `q[i][h][s][a]` over joint actions `a`.
    pub q: Vec<Vec<Vec<Vec<f64>>>>,
}

impl ValueTables {
    fn zeros(game: &MarkovGameSpec) -> Self {
        let (n, hz, s, j) = (
            game.players(),
            game.horizon(),
            game.states(),
            game.joint_actions(),
        );
        Self {
            v: vec![vec![vec![0.0; s]; hz + 1]; n],
            v_eps: vec![vec![vec![0.0; s]; hz]; n],
            q: vec![vec![vec![vec![0.0; j]; s]; hz]; n],
        }
    }

    /// Largest `|v_eps - other.v_eps|` over all players, steps and states.
    pub fn sup_distance_eps(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for (a, b) in self
            .v_eps
            .iter()
            .flatten()
            .zip(other.v_eps.iter().flatten())
        {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }
}

/// Output of [`backward_induction`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarkovSolveReport {
    pub policy: PolicyProfile,
    pub values: ValueTables,
    /// Largest player gap reported by the stage solve, `[h][s]`.
    pub stage_gaps: Vec<Vec<f64>>,
    /// Most step-size halvings any stage solve needed.
    pub max_attempts: usize,
    pub tractability: TractabilityRecord,
}

/// Per-player, per-step, per-state equilibrium gaps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapTable {
    /// `gaps[i][h][s]`.
    pub gaps: Vec<Vec<Vec<f64>>>,
}

impl GapTable {
    pub fn max(&self) -> f64 {
        self.gaps
            .iter()
            .flatten()
            .flatten()
            .copied()
            .fold(0.0, f64::max)
    }
}

/// The matrix game at one state whose payoffs are the `Q` values
/// `q[i] = Q_{i,h}(s, .)` over joint actions.
pub fn stage_game(game: &MarkovGameSpec, q: &[&[f64]]) -> Result<MatrixGameSpec> {
    check_len("stage payoffs", game.players(), q.len())?;
    let shape = game.action_counts().to_vec();
    let tensors = q
        .iter()
        .map(|qi| PayoffTensor::new(shape.clone(), qi.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    MatrixGameSpec::new(
        shape,
        tensors,
        game.pol_risk().to_vec(),
        game.rationality().to_vec(),
        game.risk_mode(),
    )
}

/// `Q_{i,h}(s, a)` for every player, state and joint action given the
/// loss-to-go of step `h + 1`.
fn q_layer(game: &MarkovGameSpec, h: usize, v_next: &[&[f64]]) -> Vec<Vec<Vec<f64>>> {
    let n = game.players();
    let sign = match game.recursion_mode() {
        RecursionMode::UtilityConsistent => -1.0,
        RecursionMode::PaperLiteral => 1.0,
    };
    let w: Vec<Vec<f64>> = v_next
        .iter()
        .map(|v| v.iter().map(|x| sign * x).collect())
        .collect();
    let w_min: Vec<f64> = w
        .iter()
        .map(|v| v.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let joint = game.joint_actions();
    let per_state: Vec<Vec<Vec<f64>>> = (0..game.states())
        .into_par_iter()
        .map_init(EnvScratch::default, |buf, s| {
            (0..n)
                .map(|i| {
                    (0..joint)
                        .map(|a| {
                            let row = game.transition(h, s, a);
                            env_value(
                                game.reward(i, h, s, a),
                                row,
                                &w[i],
                                w_min[i],
                                &game.env_risk()[i],
                                buf,
                            )
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    (0..n)
        .map(|i| per_state.iter().map(|st| st[i].clone()).collect())
        .collect()
}

fn stage_at(
    game: &MarkovGameSpec,
    tables: &ValueTables,
    h: usize,
    s: usize,
) -> Result<MatrixGameSpec> {
    let q: Vec<&[f64]> = tables.q.iter().map(|qi| qi[h][s].as_slice()).collect();
    stage_game(game, &q)
}

/// Loss and regularized loss of every player at one stage under `profile`.
fn stage_values(stage: &MatrixGameSpec, profile: &[MixedStrategy]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut v = Vec::with_capacity(profile.len());
    let mut v_eps = Vec::with_capacity(profile.len());
    for i in 0..profile.len() {
        let loss = super::policy_risk_operator(stage, i, profile, false)?;
        let rat = &stage.rationality()[i];
        v.push(loss);
        v_eps.push(loss + rat.epsilon * rat.kind.value(profile[i].probs()));
    }
    Ok((v, v_eps))
}

fn with_context<T>(h: usize, s: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        step: h,
        state: s,
        source: Box::new(e),
    })
}

fn store_q(tables: &mut ValueTables, h: usize, q: Vec<Vec<Vec<f64>>>) {
    for (i, qi) in q.into_iter().enumerate() {
        tables.q[i][h] = qi;
    }
}

fn v_next(tables: &ValueTables, h: usize) -> Vec<&[f64]> {
    tables.v.iter().map(|vi| vi[h + 1].as_slice()).collect()
}

/// Tractability of the stage games. The condition depends only on the risk
/// and rationality parameters, which every stage shares.
pub fn stage_tractability(game: &MarkovGameSpec) -> Result<TractabilityRecord> {
    let zero = vec![0.0; game.joint_actions()];
    let probe = stage_game(game, &vec![zero.as_slice(); game.players()])?;
    Ok(tractability_record(&probe))
}

/// Solves the game from the last step backwards: at each step the `Q`
/// tables are formed from the next step's values and every state's stage
/// game is solved with [`solve_rqe_with`]. States of one step are solved in
/// parallel.
pub fn backward_induction(game: &MarkovGameSpec, cfg: &SolverConfig) -> Result<MarkovSolveReport> {
    let (n, hz, ns) = (game.players(), game.horizon(), game.states());
    let mut tables = ValueTables::zeros(game);
    let mut policy = PolicyProfile::uniform(game);
    let mut stage_gaps = vec![vec![0.0; ns]; hz];
    let mut max_attempts = 0;

    let tractability = stage_tractability(game)?;
    if !tractability.holds {
        log::warn!(
            "tractability condition fails for the stage games; no equilibrium guarantee applies"
        );
    }

    for h in (0..hz).rev() {
        let q = q_layer(game, h, &v_next(&tables, h));
        store_q(&mut tables, h, q);
        let solved: Vec<Result<_>> = (0..ns)
            .into_par_iter()
            .map(|s| {
                with_context(
                    h,
                    s,
                    (|| {
                        let stage = stage_at(game, &tables, h, s)?;
                        let report = solve_rqe_with(&stage, cfg, tractability.clone())?;
                        let values = stage_values(&stage, &report.strategy)?;
                        Ok((report, values))
                    })(),
                )
            })
            .collect();
        for (s, r) in solved.into_iter().enumerate() {
            let (report, (v, v_eps)) = r?;
            for i in 0..n {
                tables.v[i][h][s] = v[i];
                tables.v_eps[i][h][s] = v_eps[i];
            }
            stage_gaps[h][s] = report.max_gap;
            max_attempts = max_attempts.max(report.attempts);
            policy.set(h, s, report.strategy);
        }
        let worst = stage_gaps[h].iter().copied().fold(0.0, f64::max);
        log::info!(
            "step {} of {hz}: {ns} stage games solved, largest gap {worst:.3e}",
            h + 1
        );
    }
    Ok(MarkovSolveReport {
        policy,
        values: tables,
        stage_gaps,
        max_attempts,
        tractability,
    })
}

/// Value tables of a given policy, computed by the same recursion as
/// [`backward_induction`] without solving any stage game.
pub fn evaluate_policy(game: &MarkovGameSpec, policy: &PolicyProfile) -> Result<ValueTables> {
    policy.check(game)?;
    let n = game.players();
    let mut tables = ValueTables::zeros(game);
    for h in (0..game.horizon()).rev() {
        let q = q_layer(game, h, &v_next(&tables, h));
        store_q(&mut tables, h, q);
        let vals: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..game.states())
            .into_par_iter()
            .map(|s| {
                with_context(
                    h,
                    s,
                    stage_at(game, &tables, h, s).and_then(|g| stage_values(&g, policy.at(h, s))),
                )
            })
            .collect();
        for (s, r) in vals.into_iter().enumerate() {
            let (v, v_eps) = r?;
            for i in 0..n {
                tables.v[i][h][s] = v[i];
                tables.v_eps[i][h][s] = v_eps[i];
            }
        }
    }
    Ok(tables)
}

/// Gap of every player at every step and state. A deviation at step `h`
/// leaves later steps unchanged, so each entry is the RQE gap of the stage
/// game built from the policy's own continuation values.
pub fn markov_rqe_gap(
    game: &MarkovGameSpec,
    policy: &PolicyProfile,
    cfg: &SolverConfig,
) -> Result<GapTable> {
    let tables = evaluate_policy(game, policy)?;
    let (n, hz, ns) = (game.players(), game.horizon(), game.states());
    let minimizer = cfg.gap_minimizer();
    let cells: Vec<Result<Vec<f64>>> = (0..hz * ns)
        .into_par_iter()
        .map(|c| {
            let (h, s) = (c / ns, c % ns);
            with_context(
                h,
                s,
                stage_at(game, &tables, h, s)
                    .and_then(|g| rqe_gap_with(&g, policy.at(h, s), &minimizer)),
            )
        })
        .collect();
    let mut gaps = vec![vec![vec![0.0; ns]; hz]; n];
    for (c, r) in cells.into_iter().enumerate() {
        for (i, g) in r?.into_iter().enumerate() {
            gaps[i][c / ns][c % ns] = g;
        }
    }
    Ok(GapTable { gaps })
}
