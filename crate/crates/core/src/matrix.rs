//! Normal-form games with risk-averse, boundedly rational players.
//!
//! Payoffs are utilities (higher is better). A player's *risk loss* is a
//! convex risk measure of its payoff evaluated at the opponents' mixed
//! strategies; the regularized loss adds `epsilon * nu(pi_i)`.
//!
//! For more than two players, each payoff tensor is reduced to a matrix with
//! one column block per opponent, `M_i = [M_i1 | M_i2 | ...]`, and the
//! adversary picks an independent distribution per block. The blocks are the
//! pairwise (polymatrix) component of the tensor:
//! `M_ij(a_i, a_j) = E[R_i | a_i, a_j] - (n-2)/(n-1) E[R_i | a_i]` with
//! expectations over uniformly random remaining actions. For two players this
//! is just `R_i`; for polymatrix games it reproduces the multilinear payoff
//! exactly, and in general it differs from it.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};
use crate::risk::{dual_risk_raw, RiskSpec};
use crate::simplex::{minimize_on_simplex, MixedStrategy, Regularizer, SimplexMinimizer};

/// Dense payoff array indexed by joint pure actions, row-major in player order.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl PayoffTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return invalid("payoff tensor needs a nonempty shape with positive extents");
        }
        check_len("payoff tensor", shape.iter().product(), data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("payoffs must be finite");
        }
        Ok(Self { shape, data })
    }

    /// Two-player payoff from a row-major `rows x cols` matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return invalid("ragged payoff matrix");
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_index(&self, actions: &[usize]) -> usize {
        actions
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&a, &n)| acc * n + a)
    }

    pub fn get(&self, actions: &[usize]) -> f64 {
        self.data[self.flat_index(actions)]
    }
}

/// Regularizer and its weight for one player.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalitySpec {
    pub kind: Regularizer,
    pub epsilon: f64,
}

impl RationalitySpec {
    pub fn log_barrier(epsilon: f64) -> Self {
        Self {
            kind: Regularizer::LogBarrier,
            epsilon,
        }
    }

    pub fn neg_entropy(epsilon: f64) -> Self {
        Self {
            kind: Regularizer::NegEntropy,
            epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return invalid(format!(
                "rationality epsilon must be positive and finite, got {}",
                self.epsilon
            ));
        }
        Ok(())
    }
}

/// Whether the adversary sees the player's mixed strategy (aggregate) or
/// each pure action separately (action-dependent).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMode {
    #[default]
    Aggregate,
    ActionDependent,
}

/// Payoff of player `i` as an `A_i x sum_{j != i} A_j` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FlattenedPayoff {
    pub rows: usize,
    pub cols: usize,
    /// Opponent index and column offset of each block.
    pub blocks: Vec<(usize, usize)>,
    pub block_sizes: Vec<usize>,
    pub data: Vec<f64>,
}

impl FlattenedPayoff {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// `M^T pi` restricted to one block.
    fn block_outcomes(&self, pi: &[f64], block: usize, out: &mut [f64]) {
        let (_, off) = self.blocks[block];
        let size = self.block_sizes[block];
        out[..size].fill(0.0);
        for (a, &w) in pi.iter().enumerate() {
            if w != 0.0 {
                let row = &self.data[a * self.cols + off..a * self.cols + off + size];
                for (o, v) in out.iter_mut().zip(row) {
                    *o += w * v;
                }
            }
        }
    }
}

/// A normal-form game with risk and rationality parameters per player.
#[derive(Clone, Debug)]
pub struct MatrixGameSpec {
    action_counts: Vec<usize>,
    payoffs: Vec<PayoffTensor>,
    risk: Vec<RiskSpec>,
    rationality: Vec<RationalitySpec>,
    risk_mode: RiskMode,
    flattened: Vec<FlattenedPayoff>,
}

impl MatrixGameSpec {
    pub fn new(
        action_counts: Vec<usize>,
        payoffs: Vec<PayoffTensor>,
        risk: Vec<RiskSpec>,
        rationality: Vec<RationalitySpec>,
        risk_mode: RiskMode,
    ) -> Result<Self> {
        let n = action_counts.len();
        if n < 2 {
            return invalid("a game needs at least two players");
        }
        if action_counts.contains(&0) {
            return invalid("every player needs at least one action");
        }
        check_len("payoff tensors", n, payoffs.len())?;
        check_len("risk specs", n, risk.len())?;
        check_len("rationality specs", n, rationality.len())?;
        for (i, t) in payoffs.iter().enumerate() {
            if t.shape() != action_counts.as_slice() {
                return invalid(format!(
                    "payoff tensor of player {i} has shape {:?}, expected {:?}",
                    t.shape(),
                    action_counts
                ));
            }
        }
        for r in &risk {
            r.validate()?;
        }
        for r in &rationality {
            r.validate()?;
        }
        let flattened = (0..n)
            .map(|i| flatten(&action_counts, &payoffs[i], i))
            .collect();
        Ok(Self {
            action_counts,
            payoffs,
            risk,
            rationality,
            risk_mode,
            flattened,
        })
    }

    /// Two-player game from `R_1` and `R_2`, both indexed `[a_1][a_2]`.
    pub fn two_player(
        r1: &[Vec<f64>],
        r2: &[Vec<f64>],
        risk: [RiskSpec; 2],
        rationality: [RationalitySpec; 2],
    ) -> Result<Self> {
        let t1 = PayoffTensor::from_rows(r1)?;
        let t2 = PayoffTensor::from_rows(r2)?;
        Self::new(
            t1.shape().to_vec(),
            vec![t1, t2],
            risk.to_vec(),
            rationality.to_vec(),
            RiskMode::Aggregate,
        )
    }

    pub fn players(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn payoffs(&self) -> &[PayoffTensor] {
        &self.payoffs
    }

    pub fn risk(&self) -> &[RiskSpec] {
        &self.risk
    }

    pub fn rationality(&self) -> &[RationalitySpec] {
        &self.rationality
    }

    pub fn risk_mode(&self) -> RiskMode {
        self.risk_mode
    }

    pub fn flattened(&self, i: usize) -> &FlattenedPayoff {
        &self.flattened[i]
    }

    pub fn with_risk_mode(mut self, mode: RiskMode) -> Self {
        self.risk_mode = mode;
        self
    }

    pub fn with_parameters(
        self,
        risk: Vec<RiskSpec>,
        rationality: Vec<RationalitySpec>,
    ) -> Result<Self> {
        Self::new(
            self.action_counts,
            self.payoffs,
            risk,
            rationality,
            self.risk_mode,
        )
    }

    /// Largest payoff magnitude.
    pub fn payoff_scale(&self) -> f64 {
        self.payoffs
            .iter()
            .flat_map(|t| t.data().iter())
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub(crate) fn check_profile(&self, profile: &[MixedStrategy]) -> Result<()> {
        check_len("strategy profile", self.players(), profile.len())?;
        for (i, s) in profile.iter().enumerate() {
            check_len(
                &format!("strategy of player {i}"),
                self.action_counts[i],
                s.len(),
            )?;
        }
        Ok(())
    }

    /// Risk loss of player `i` playing `pi_i` against `others`, optionally
    /// writing its gradient in `pi_i`. `others[i]` is ignored.
    pub(crate) fn risk_loss_raw(
        &self,
        i: usize,
        pi_i: &[f64],
        others: &[&[f64]],
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let m = &self.flattened[i];
        let spec = &self.risk[i];
        let max_block = m.block_sizes.iter().copied().max().unwrap_or(0);
        let mut x = vec![0.0; max_block];
        let mut p = vec![0.0; max_block];
        match self.risk_mode {
            RiskMode::Aggregate => {
                let mut total = 0.0;
                let mut grad = grad;
                if let Some(g) = grad.as_deref_mut() {
                    g.fill(0.0);
                }
                for (b, &(j, off)) in m.blocks.iter().enumerate() {
                    let size = m.block_sizes[b];
                    m.block_outcomes(pi_i, b, &mut x);
                    total += dual_risk_raw(&x[..size], others[j], spec, Some(&mut p[..size]));
                    if let Some(g) = grad.as_deref_mut() {
                        // Danskin: d/d pi_i of sup_p -pi_i^T M p - D = -M p*
                        for (a, ga) in g.iter_mut().enumerate() {
                            let row = &m.data[a * m.cols + off..a * m.cols + off + size];
                            *ga -= row.iter().zip(&p[..size]).map(|(r, q)| r * q).sum::<f64>();
                        }
                    }
                }
                total
            }
            RiskMode::ActionDependent => {
                let costs = self.action_costs(i, others);
                if let Some(g) = grad {
                    g.copy_from_slice(&costs);
                }
                costs.iter().zip(pi_i).map(|(c, w)| c * w).sum()
            }
        }
    }

    /// Per-action risk `sum_j rho(M_ij(a, .))` for the action-dependent mode.
    pub(crate) fn action_costs(&self, i: usize, others: &[&[f64]]) -> Vec<f64> {
        let m = &self.flattened[i];
        let spec = &self.risk[i];
        (0..m.rows)
            .map(|a| {
                m.blocks
                    .iter()
                    .enumerate()
                    .map(|(b, &(j, off))| {
                        let size = m.block_sizes[b];
                        dual_risk_raw(&m.row(a)[off..off + size], others[j], spec, None)
                    })
                    .sum()
            })
            .collect()
    }

    pub(crate) fn regularized_loss_raw(
        &self,
        i: usize,
        pi_i: &[f64],
        others: &[&[f64]],
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let r = self.rationality[i];
        match grad {
            Some(g) => {
                let v = self.risk_loss_raw(i, pi_i, others, Some(&mut *g));
                let mut reg = vec![0.0; pi_i.len()];
                r.kind.gradient(pi_i, &mut reg);
                for (a, b) in g.iter_mut().zip(&reg) {
                    *a += r.epsilon * b;
                }
                v + r.epsilon * r.kind.value(pi_i)
            }
            None => self.risk_loss_raw(i, pi_i, others, None) + r.epsilon * r.kind.value(pi_i),
        }
    }
}

fn flatten(counts: &[usize], tensor: &PayoffTensor, i: usize) -> FlattenedPayoff {
    let n = counts.len();
    let rows = counts[i];
    let opponents: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let block_sizes: Vec<usize> = opponents.iter().map(|&j| counts[j]).collect();
    let mut blocks = Vec::with_capacity(opponents.len());
    let mut off = 0;
    for (&j, &size) in opponents.iter().zip(&block_sizes) {
        blocks.push((j, off));
        off += size;
    }
    let cols = off;
    let total: usize = counts.iter().product();
    let others_total = total / rows;

    let mut row_mean = vec![0.0; rows];
    let mut pair_sum = vec![0.0; rows * cols];
    let mut actions = vec![0usize; n];
    for (flat, &v) in tensor.data().iter().enumerate() {
        let mut rem = flat;
        for k in (0..n).rev() {
            actions[k] = rem % counts[k];
            rem /= counts[k];
        }
        let a = actions[i];
        row_mean[a] += v / others_total as f64;
        for (&(j, off), _) in blocks.iter().zip(&block_sizes) {
            pair_sum[a * cols + off + actions[j]] += v;
        }
    }
    let shrink = if n > 2 {
        (n - 2) as f64 / (n - 1) as f64
    } else {
        0.0
    };
    let mut data = vec![0.0; rows * cols];
    for a in 0..rows {
        for (&(j, off), &size) in blocks.iter().zip(&block_sizes) {
            let cell = (others_total / counts[j]) as f64;
            for b in 0..size {
                data[a * cols + off + b] =
                    pair_sum[a * cols + off + b] / cell - shrink * row_mean[a];
            }
        }
    }
    if n == 2 {
        // keep exact payoffs rather than a divided-then-multiplied copy
        for a in 0..rows {
            for b in 0..cols {
                let idx = if i == 0 { [a, b] } else { [b, a] };
                data[a * cols + b] = tensor.get(&idx);
            }
        }
    }
    FlattenedPayoff {
        rows,
        cols,
        blocks,
        block_sizes,
        data,
    }
}

fn others_of(profile: &[MixedStrategy]) -> Vec<&[f64]> {
    profile.iter().map(MixedStrategy::probs).collect()
}

/// Multilinear expected payoff of player `i` under independent mixing.
pub fn expected_utility(game: &MatrixGameSpec, i: usize, profile: &[MixedStrategy]) -> Result<f64> {
    game.check_profile(profile)?;
    let counts = game.action_counts();
    let n = counts.len();
    let mut total = 0.0;
    let mut actions = vec![0usize; n];
    for (flat, &v) in game.payoffs[i].data().iter().enumerate() {
        let mut rem = flat;
        for k in (0..n).rev() {
            actions[k] = rem % counts[k];
            rem /= counts[k];
        }
        let w: f64 = actions
            .iter()
            .enumerate()
            .map(|(k, &a)| profile[k].probs()[a])
            .product();
        total += w * v;
    }
    Ok(total)
}

/// Aggregate risk loss `sup_p -pi_i^T M_i p - D_i(p, pi_{-i})`.
pub fn aggregate_risk_loss(
    game: &MatrixGameSpec,
    i: usize,
    profile: &[MixedStrategy],
) -> Result<f64> {
    game.check_profile(profile)?;
    let g = game.clone().with_risk_mode(RiskMode::Aggregate);
    Ok(g.risk_loss_raw(i, profile[i].probs(), &others_of(profile), None))
}

/// Action-dependent risk loss `sum_a pi_i(a) rho(M_i(a, .))`.
pub fn action_dependent_risk_loss(
    game: &MatrixGameSpec,
    i: usize,
    profile: &[MixedStrategy],
) -> Result<f64> {
    game.check_profile(profile)?;
    let costs = game.action_costs(i, &others_of(profile));
    Ok(profile[i].expect(&costs))
}

/// Risk loss under the game's own risk mode.
pub fn risk_loss(game: &MatrixGameSpec, i: usize, profile: &[MixedStrategy]) -> Result<f64> {
    game.check_profile(profile)?;
    Ok(game.risk_loss_raw(i, profile[i].probs(), &others_of(profile), None))
}

/// Risk loss plus `epsilon_i * nu_i(pi_i)`.
pub fn regularized_loss(game: &MatrixGameSpec, i: usize, profile: &[MixedStrategy]) -> Result<f64> {
    game.check_profile(profile)?;
    Ok(game.regularized_loss_raw(i, profile[i].probs(), &others_of(profile), None))
}

/// A certified minimizer of a player's regularized loss.
#[derive(Clone, Debug)]
pub struct BestResponse {
    pub strategy: MixedStrategy,
    pub value: f64,
    /// Upper bound on `value - min`.
    pub certificate: f64,
}

/// Minimizes player `i`'s regularized loss with the others held fixed.
pub fn best_response(
    game: &MatrixGameSpec,
    i: usize,
    profile: &[MixedStrategy],
) -> Result<BestResponse> {
    best_response_with(game, i, profile, &SimplexMinimizer::default())
}

pub fn best_response_with(
    game: &MatrixGameSpec,
    i: usize,
    profile: &[MixedStrategy],
    cfg: &SimplexMinimizer,
) -> Result<BestResponse> {
    game.check_profile(profile)?;
    if i >= game.players() {
        return invalid(format!("player {i} out of range"));
    }
    let others = others_of(profile);
    let r = game.rationality[i];
    if game.risk_mode == RiskMode::ActionDependent {
        let costs = game.action_costs(i, &others);
        let x = regularized_linear_argmin(&costs, r.kind, r.epsilon);
        let value = game.regularized_loss_raw(i, &x, &others, None);
        return Ok(BestResponse {
            strategy: MixedStrategy::from_vec_unchecked(x),
            value,
            certificate: 0.0,
        });
    }
    let start = profile[i].floored(1e-9);
    let m = minimize_on_simplex(
        |x, g| game.regularized_loss_raw(i, x, &others, Some(g)),
        start.probs(),
        cfg,
    );
    Ok(BestResponse {
        strategy: MixedStrategy::from_vec_unchecked(m.point),
        value: m.value,
        certificate: m.certificate,
    })
}

/// `argmin_x <c, x> + epsilon nu(x)` over the simplex, in closed form for
/// negative entropy and by a monotone 1-D solve for the log barrier.
pub fn regularized_linear_argmin(c: &[f64], kind: Regularizer, epsilon: f64) -> Vec<f64> {
    match kind {
        Regularizer::NegEntropy => {
            let min = c.iter().copied().fold(f64::INFINITY, f64::min);
            let mut w: Vec<f64> = c.iter().map(|v| (-(v - min) / epsilon).exp()).collect();
            let z: f64 = w.iter().sum();
            for v in &mut w {
                *v /= z;
            }
            w
        }
        Regularizer::LogBarrier => {
            // x_k = epsilon / (c_k + mu); write d = mu + min c and solve sum x = 1
            let min = c.iter().copied().fold(f64::INFINITY, f64::min);
            let n = c.len() as f64;
            let h = |d: f64| -> (f64, f64) {
                let mut v = -1.0;
                let mut dv = 0.0;
                for &ck in c {
                    let u = ck - min + d;
                    v += epsilon / u;
                    dv -= epsilon / (u * u);
                }
                (v, dv)
            };
            let mut d = epsilon;
            let hi = n * epsilon;
            for _ in 0..200 {
                let (v, dv) = h(d);
                if v <= 0.0 {
                    break;
                }
                let next = (d - v / dv).min(hi);
                if (next - d).abs() <= 1e-16 * d {
                    d = next;
                    break;
                }
                d = next;
            }
            let mut x: Vec<f64> = c.iter().map(|&ck| epsilon / (ck - min + d)).collect();
            let z: f64 = x.iter().sum();
            for v in &mut x {
                *v /= z;
            }
            x
        }
    }
}

/// Per-player RQE gap: regularized loss minus the best-response value.
pub fn rqe_gap(game: &MatrixGameSpec, profile: &[MixedStrategy]) -> Result<Vec<f64>> {
    rqe_gap_with(game, profile, &SimplexMinimizer::default())
}

pub fn rqe_gap_with(
    game: &MatrixGameSpec,
    profile: &[MixedStrategy],
    cfg: &SimplexMinimizer,
) -> Result<Vec<f64>> {
    game.check_profile(profile)?;
    let others = others_of(profile);
    (0..game.players())
        .map(|i| {
            let current = game.regularized_loss_raw(i, profile[i].probs(), &others, None);
            let br = best_response_with(game, i, profile, cfg)?;
            Ok((current - br.value.min(current)).max(0.0))
        })
        .collect()
}
