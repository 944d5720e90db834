//! Learning a Markov game from a generative model.
//!
//! Every `(step, state, joint action)` cell is sampled `N` times from its own
//! random stream, the empirical game is solved by backward induction, and the
//! resulting policy is scored on the true game.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{
    backward_induction, markov_rqe_gap, MarkovDynamics, MarkovGameSpec, PolicyProfile,
    TransitionRow,
};
use crate::solver::SolverConfig;

/// Simulator for a known game: draws next states and reports rewards.
#[derive(Clone, Debug)]
pub struct GenerativeModel {
    game: MarkovGameSpec,
}

impl GenerativeModel {
    pub fn new(game: MarkovGameSpec) -> Self {
        Self { game }
    }

    pub fn game(&self) -> &MarkovGameSpec {
        &self.game
    }

    /// Number of sampling cells, `H * S * J`.
    pub fn cells(&self) -> usize {
        self.game.horizon() * self.game.states() * self.game.joint_actions()
    }

    /// Random stream of cell `(h, s, joint)` under `seed`. Streams of distinct
    /// cells are independent, so the sampling order does not matter.
    pub fn cell_rng(&self, seed: u64, h: usize, s: usize, joint: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((h * self.game.states() + s) * self.game.joint_actions() + joint) as u64);
        rng
    }

    /// One draw: the next state and the reward of every player.
    pub fn draw(&self, rng: &mut impl Rng, h: usize, s: usize, joint: usize) -> (usize, Vec<f64>) {
        let row = self.game.transition(h, s, joint);
        let rewards = (0..self.game.players())
            .map(|i| self.game.reward(i, h, s, joint))
            .collect();
        (sample_row(row, rng), rewards)
    }
}

fn sample_row(row: &TransitionRow, rng: &mut impl Rng) -> usize {
    if row.next.len() == 1 {
        return row.next[0];
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (&t, &p) in row.next.iter().zip(&row.prob) {
        acc += p;
        if u < acc {
            return t;
        }
    }
    row.next[row.prob.iter().rposition(|&p| p > 0.0).unwrap_or(0)]
}

/// Visit counts of one cell, sorted by next state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub next: Vec<usize>,
    pub count: Vec<u64>,
}

/// Rewards and empirical transition frequencies built from `n` draws per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalModel {
    /// Draws per cell; zero for the exact model.
    pub n: u64,
    /// `rewards[h][i][s * J + a]`, read from the first draw of each cell.
    pub rewards: Vec<Vec<Vec<f64>>>,
    /// `counts[h][s * J + a]`.
    pub counts: Vec<Vec<CellCounts>>,
}

impl EmpiricalModel {
    /// The model an infinite sample would produce, marked by `n = 0`.
    pub fn exact(game: &MarkovGameSpec) -> Self {
        let nj = game.joint_actions();
        let rewards = (0..game.horizon())
            .map(|h| {
                (0..game.players())
                    .map(|i| {
                        (0..game.states() * nj)
                            .map(|c| game.reward(i, h, c / nj, c % nj))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            n: 0,
            rewards,
            counts: vec![Vec::new(); game.horizon()],
        }
    }

    pub fn transition_rows(&self, game: &MarkovGameSpec) -> Vec<Vec<TransitionRow>> {
        if self.n == 0 {
            return (0..game.horizon())
                .map(|h| game.transition_layer(h).to_vec())
                .collect();
        }
        let n = self.n as f64;
        self.counts
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|c| TransitionRow {
                        next: c.next.clone(),
                        prob: c.count.iter().map(|&k| k as f64 / n).collect(),
                    })
                    .collect()
            })
            .collect()
    }

    /// The empirical game with the parameters of `game`.
    pub fn game(&self, game: &MarkovGameSpec) -> Result<MarkovGameSpec> {
        let dynamics = MarkovDynamics {
            horizon: game.horizon(),
            states: game.states(),
            action_counts: game.action_counts().to_vec(),
            rewards: self.rewards.clone(),
            transitions: self.transition_rows(game),
            initial_state: game.initial_state(),
        };
        MarkovGameSpec::new(dynamics, game.params().clone())
    }
}

/// Draws `n` next states for every cell of the generative model.
pub fn sample_model(gen: &GenerativeModel, n: u64, seed: u64) -> Result<EmpiricalModel> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "samples per cell must be at least 1".into(),
        ));
    }
    let game = gen.game();
    let (hz, ns, nj) = (game.horizon(), game.states(), game.joint_actions());
    let cells: Vec<(CellCounts, Vec<f64>)> = (0..hz * ns * nj)
        .into_par_iter()
        .map(|c| {
            let (h, s, j) = (c / (ns * nj), (c / nj) % ns, c % nj);
            let mut rng = gen.cell_rng(seed, h, s, j);
            let mut tally = vec![0u64; ns];
            let (first, rewards) = gen.draw(&mut rng, h, s, j);
            tally[first] += 1;
            for _ in 1..n {
                tally[sample_row(game.transition(h, s, j), &mut rng)] += 1;
            }
            let (next, count) = tally
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(t, &k)| (t, k))
                .unzip();
            (CellCounts { next, count }, rewards)
        })
        .collect();
    let mut rewards = vec![vec![vec![0.0; ns * nj]; game.players()]; hz];
    let mut counts = vec![Vec::with_capacity(ns * nj); hz];
    for (c, (cell, r)) in cells.into_iter().enumerate() {
        let h = c / (ns * nj);
        for (i, v) in r.into_iter().enumerate() {
            rewards[h][i][c % (ns * nj)] = v;
        }
        counts[h].push(cell);
    }
    Ok(EmpiricalModel { n, rewards, counts })
}

/// Terms of the sample-complexity bound for one solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundComponents {
    /// Lipschitz constant of the environment penalties in the reference
    /// distribution, when one is known.
    pub lipschitz: Option<f64>,
    /// `H * L * max ||P - P_hat||_1`.
    pub perturbation: Option<f64>,
    /// Radius that every cell's l1 error stays below with probability
    /// `1 - delta`.
    pub concentration_radius: f64,
    /// Gap guarantee implied by that radius.
    pub gap_bound: Option<f64>,
    pub delta: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimationDiagnostics {
    pub n: u64,
    pub seed: u64,
    pub max_l1_error: f64,
    /// Largest gap of the learned policy on the true game.
    pub true_gap: f64,
    /// Largest gap of the learned policy on the empirical game.
    pub empirical_gap: f64,
    pub bound: BoundComponents,
    pub runtime_ms: f64,
}

/// Size of a game as seen by the bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameDims {
    pub states: usize,
    pub joint_actions: usize,
    pub horizon: usize,
}

impl GameDims {
    pub fn of(game: &MarkovGameSpec) -> Self {
        Self {
            states: game.states(),
            joint_actions: game.joint_actions(),
            horizon: game.horizon(),
        }
    }

    fn log_term(&self, delta: f64) -> f64 {
        (2.0 * (self.states * self.horizon * self.joint_actions) as f64 / delta).ln()
    }
}

/// `sqrt(14 S / N * log(2 S H J / delta))`.
pub fn concentration_radius(dims: GameDims, n: u64, delta: f64) -> f64 {
    (14.0 * dims.states as f64 / n as f64 * dims.log_term(delta)).sqrt()
}

/// `8 H L sqrt(S / N * log(2 S H J / delta))`.
pub fn gap_guarantee(dims: GameDims, lipschitz: f64, n: u64, delta: f64) -> f64 {
    8.0 * dims.horizon as f64
        * lipschitz
        * (dims.states as f64 / n as f64 * dims.log_term(delta)).sqrt()
}

/// Smallest `N` whose [`gap_guarantee`] is at most `delta`.
pub fn sample_bound(dims: GameDims, lipschitz: f64, delta: f64) -> Result<u64> {
    if !(delta > 0.0 && delta < 1.0) || !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "sample bound needs delta in (0, 1) and a positive Lipschitz constant, got {delta} and {lipschitz}"
        )));
    }
    let h = dims.horizon as f64;
    let real = 64.0 * h * h * lipschitz * lipschitz * dims.states as f64 * dims.log_term(delta)
        / (delta * delta);
    let mut n = real.ceil().max(1.0) as u64;
    while n > 1 && gap_guarantee(dims, lipschitz, n - 1, delta) <= delta {
        n -= 1;
    }
    while gap_guarantee(dims, lipschitz, n, delta) > delta {
        n += 1;
    }
    Ok(n)
}

/// Largest l1 Lipschitz constant among the players' environment penalties.
pub fn env_lipschitz(game: &MarkovGameSpec) -> Option<f64> {
    game.env_risk()
        .iter()
        .map(|r| r.lipschitz_l1())
        .try_fold(0.0f64, |a, l| l.map(|l| a.max(l)))
}

/// Policy learned from an empirical model, with its diagnostics.
#[derive(Clone, Debug)]
pub struct ModelBasedSolve {
    pub policy: PolicyProfile,
    pub empirical: EmpiricalModel,
    pub diagnostics: EstimationDiagnostics,
}

/// Samples `n` draws per cell, solves the empirical game and scores the
/// policy on the true game.
pub fn model_based_solve(
    gen: &GenerativeModel,
    n: u64,
    cfg: &SolverConfig,
    seed: u64,
    delta: f64,
) -> Result<ModelBasedSolve> {
    let empirical = sample_model(gen, n, seed)?;
    solve_empirical(gen, empirical, cfg, seed, delta)
}

/// The second half of [`model_based_solve`], for a model built elsewhere.
pub fn solve_empirical(
    gen: &GenerativeModel,
    empirical: EmpiricalModel,
    cfg: &SolverConfig,
    seed: u64,
    delta: f64,
) -> Result<ModelBasedSolve> {
    let start = Instant::now();
    let truth = gen.game();
    let hat = empirical.game(truth)?;
    let report = backward_induction(&hat, cfg)?;
    let true_gap = markov_rqe_gap(truth, &report.policy, cfg)?.max();
    let empirical_gap = markov_rqe_gap(&hat, &report.policy, cfg)?.max();
    let max_l1_error = truth.max_l1_distance(&hat);
    let dims = GameDims::of(truth);
    let lipschitz = env_lipschitz(truth);
    let n = empirical.n;
    let bound = BoundComponents {
        lipschitz,
        perturbation: lipschitz.map(|l| dims.horizon as f64 * l * max_l1_error),
        concentration_radius: if n == 0 {
            0.0
        } else {
            concentration_radius(dims, n, delta)
        },
        gap_bound: lipschitz.map(|l| {
            if n == 0 {
                0.0
            } else {
                gap_guarantee(dims, l, n, delta)
            }
        }),
        delta,
    };
    let diagnostics = EstimationDiagnostics {
        n,
        seed,
        max_l1_error,
        true_gap,
        empirical_gap,
        bound,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(ModelBasedSolve {
        policy: report.policy,
        empirical,
        diagnostics,
    })
}

/// Settings of an error-versus-sample-size experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_grid: Vec<u64>,
    pub seeds: Vec<u64>,
    pub solver: SolverConfig,
    pub delta: f64,
    /// Wall-clock times make reruns differ, so they are only kept on request.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![100, 400, 1600, 6400],
            seeds: (0..20).collect(),
            solver: SolverConfig::default(),
            delta: 0.1,
            record_timing: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub seed: u64,
    pub n: u64,
    pub max_l1_error: f64,
    pub true_gap: f64,
    pub empirical_gap: f64,
    /// `true_gap` minus the gap reached with the exact model.
    pub excess_gap: f64,
    pub runtime_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub full_info_gap: f64,
    /// `(N, mean excess gap)` in grid order.
    pub mean_excess: Vec<(u64, f64)>,
    /// Least-squares slope of log mean excess gap against log N.
    pub slope: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    pub summary: ExperimentSummary,
}

/// Least-squares slope of `y` on `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Runs [`model_based_solve`] for every seed and sample size.
pub fn run_experiment(game: &MarkovGameSpec, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.n_grid.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::InvalidInput(
            "experiment needs at least one sample size and one seed".into(),
        ));
    }
    let gen = GenerativeModel::new(game.clone());
    let full = backward_induction(game, &cfg.solver)?;
    let full_info_gap = markov_rqe_gap(game, &full.policy, &cfg.solver)?.max();
    let jobs: Vec<(u64, u64)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.n_grid.iter().map(move |&n| (s, n)))
        .collect();
    let rows: Vec<Result<ExperimentRow>> = jobs
        .par_iter()
        .map(|&(seed, n)| {
            log::info!("estimation: seed {seed}, N = {n}");
            let d = model_based_solve(&gen, n, &cfg.solver, seed, cfg.delta)?.diagnostics;
            Ok(ExperimentRow {
                seed,
                n,
                max_l1_error: d.max_l1_error,
                true_gap: d.true_gap,
                empirical_gap: d.empirical_gap,
                excess_gap: d.true_gap - full_info_gap,
                runtime_ms: if cfg.record_timing { d.runtime_ms } else { 0.0 },
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mean_excess: Vec<(u64, f64)> = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n)
                .map(|r| r.excess_gap)
                .collect();
            (n, v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    let xs: Vec<f64> = mean_excess.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = mean_excess
        .iter()
        .map(|(_, e)| e.max(f64::MIN_POSITIVE).ln())
        .collect();
    let slope = if xs.len() >= 2 {
        fit_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    Ok(ExperimentResult {
        rows,
        summary: ExperimentSummary {
            full_info_gap,
            mean_excess,
            slope,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envlib::{random_markov_game, MarkovDims};
    use crate::markov::MarkovParameters;
    use crate::matrix::RationalitySpec;
    use crate::risk::RiskSpec;

    fn tiny(seed: u64) -> MarkovGameSpec {
        let dims = MarkovDims {
            states: 3,
            action_counts: vec![2, 2],
            horizon: 3,
        };
        let params = MarkovParameters::uniform(
            2,
            RiskSpec::total_variation(0.5),
            RiskSpec::kl(1.0),
            RationalitySpec::log_barrier(1.0),
        );
        random_markov_game(&dims, seed, params).unwrap()
    }

    fn deterministic() -> MarkovGameSpec {
        let mut d = tiny(0).into_parts();
        for layer in &mut d.0.transitions {
            for (c, row) in layer.iter_mut().enumerate() {
                *row = TransitionRow::deterministic(c % 3);
            }
        }
        MarkovGameSpec::new(d.0, d.1).unwrap()
    }

    #[test]
    fn deterministic_cells_are_exact() {
        let game = deterministic();
        let gen = GenerativeModel::new(game.clone());
        for n in [1, 7, 100] {
            let m = sample_model(&gen, n, 3).unwrap();
            assert_eq!(m.game(&game).unwrap().max_l1_distance(&game), 0.0);
        }
    }

    #[test]
    fn single_draw_gives_vertices() {
        let gen = GenerativeModel::new(tiny(1));
        let m = sample_model(&gen, 1, 0).unwrap();
        for layer in &m.counts {
            for c in layer {
                assert_eq!(c.count, vec![1]);
            }
        }
    }

    #[test]
    fn counts_add_up_and_rows_are_distributions() {
        let game = tiny(2);
        let gen = GenerativeModel::new(game.clone());
        let m = sample_model(&gen, 250, 9).unwrap();
        assert_eq!(m.counts.len(), 3);
        for layer in &m.counts {
            for c in layer {
                assert_eq!(c.count.iter().sum::<u64>(), 250);
            }
        }
        for layer in m.transition_rows(&game) {
            for row in layer {
                row.validate(3).unwrap();
            }
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let gen = GenerativeModel::new(tiny(3));
        assert_eq!(
            sample_model(&gen, 50, 4).unwrap(),
            sample_model(&gen, 50, 4).unwrap()
        );
        assert_ne!(
            sample_model(&gen, 50, 4).unwrap(),
            sample_model(&gen, 50, 5).unwrap()
        );
    }

    #[test]
    fn frequencies_match_a_uniform_row() {
        // chi-square goodness of fit on one cell with three equally likely
        // next states; 13.8 is the 0.999 quantile with two degrees of freedom
        let mut d = tiny(4).into_parts();
        d.0.transitions[0][0] = TransitionRow::from_dense(&[1.0 / 3.0; 3]);
        let game = MarkovGameSpec::new(d.0, d.1).unwrap();
        let gen = GenerativeModel::new(game);
        let n = 100_000u64;
        let m = sample_model(&gen, n, 11).unwrap();
        let cell = &m.counts[0][0];
        let expected = n as f64 / 3.0;
        let chi2: f64 = cell
            .count
            .iter()
            .map(|&k| (k as f64 - expected).powi(2) / expected)
            .sum();
        assert_eq!(cell.next, vec![0, 1, 2]);
        assert!(chi2 < 13.8, "{chi2}");
    }

    #[test]
    fn exact_model_reproduces_the_full_information_gap() {
        let game = tiny(5);
        let cfg = SolverConfig::default().with_iterations(2000);
        let gen = GenerativeModel::new(game.clone());
        let exact = EmpiricalModel::exact(&game);
        let out = solve_empirical(&gen, exact, &cfg, 0, 0.1).unwrap();
        let full = backward_induction(&game, &cfg).unwrap();
        let full_gap = markov_rqe_gap(&game, &full.policy, &cfg).unwrap().max();
        assert_eq!(out.diagnostics.max_l1_error, 0.0);
        assert_eq!(out.diagnostics.true_gap, full_gap);
        assert_eq!(out.diagnostics.empirical_gap, full_gap);
    }

    #[test]
    fn sample_bound_scaling() {
        let dims = GameDims {
            states: 3,
            joint_actions: 4,
            horizon: 3,
        };
        let base = sample_bound(dims, 1.0, 0.5).unwrap();
        // N is proportional to L^2 and H^2 up to the ceiling and the log term
        let doubled = sample_bound(dims, 2.0, 0.5).unwrap();
        assert!((doubled as f64 / base as f64 - 4.0).abs() < 1e-4);
        // four times the horizon costs 16x, times the growth of the log term
        let longer = sample_bound(
            GameDims {
                horizon: 12,
                ..dims
            },
            1.0,
            0.5,
        )
        .unwrap();
        let log_growth =
            (2.0 * 3.0 * 12.0 * 4.0 / 0.5f64).ln() / (2.0 * 3.0 * 3.0 * 4.0 / 0.5f64).ln();
        assert!((longer as f64 / base as f64 - 16.0 * log_growth).abs() < 1e-3);
        assert!(longer as f64 / base as f64 > 16.0);
        assert!(sample_bound(dims, 1.0, 0.0).is_err());
        assert!(sample_bound(dims, 0.0, 0.5).is_err());
    }

    #[test]
    fn sample_bound_is_the_smallest_solution() {
        // independent oracle: bisection on the real inequality
        let dims = GameDims {
            states: 3,
            joint_actions: 4,
            horizon: 3,
        };
        let (l, delta) = (1.0, 0.5f64);
        let holds = |n: f64| {
            8.0 * 3.0 * l * (3.0 / n * (2.0 * 3.0 * 3.0 * 4.0 / delta).ln()).sqrt() <= delta
        };
        let (mut lo, mut hi) = (1.0f64, 1e12f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if holds(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let n = sample_bound(dims, l, delta).unwrap();
        assert_eq!(n, hi.ceil() as u64);
        assert_eq!(n, 34_352);
    }

    #[test]
    fn slope_of_a_power_law() {
        let x: Vec<f64> = [100.0f64, 400.0, 1600.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = [100.0f64, 400.0, 1600.0]
            .iter()
            .map(|v| (3.0 * v.powf(-0.5)).ln())
            .collect();
        assert!((fit_slope(&x, &y) + 0.5).abs() < 1e-12);
    }
}
