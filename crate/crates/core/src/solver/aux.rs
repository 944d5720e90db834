//! The auxiliary 2n-player game: each original player `i` is paired with an
//! adversary choosing a distribution `p_i` over the opponents' actions.
//!
//! Aggregate mode:
//! * `J_i    = -pi_i^T M_i p_i - D_i(p_i, pi_-i) + eps_i nu_i(pi_i)`
//! * `Jbar_i =  pi_i^T M_i p_i + D_i(p_i, pi_-i) - sum_{j != i} xi_ij nu_j(pi_j)`
//!
//! Action-dependent mode uses one adversary row `p_{i,a}` per action `a` of
//! player `i`, weighted by `pi_i(a)`.

use serde::{Deserialize, Serialize};

use super::xi::check_tractability;
use crate::error::{check_len, Result};
use crate::matrix::{MatrixGameSpec, RiskMode};

/// Joint state of all 2n players.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxProfile {
    pub pi: Vec<Vec<f64>>,
    /// Adversary `i`'s distributions, concatenated block by block (and row by
    /// row in action-dependent mode).
    pub adversary: Vec<Vec<f64>>,
}

/// The auxiliary game together with the `xi` weights of its adversaries.
#[derive(Clone, Debug)]
pub struct AuxiliaryGame {
    game: MatrixGameSpec,
    xi: Vec<Vec<f64>>,
}

/// Builds the auxiliary game, taking `xi` from the tractability analysis
/// where it exists and `0` otherwise. The weights only enter the adversary
/// losses through terms that do not depend on `p_i`, so they do not affect
/// learning dynamics.
pub fn build_auxiliary(game: &MatrixGameSpec) -> AuxiliaryGame {
    let n = game.players();
    let xi = match check_tractability(game) {
        Ok(rec) => rec
            .xi
            .iter()
            .map(|row| row.iter().map(|x| x.unwrap_or(0.0)).collect())
            .collect(),
        Err(_) => vec![vec![0.0; n]; n],
    };
    AuxiliaryGame {
        game: game.clone(),
        xi,
    }
}

impl AuxiliaryGame {
    pub fn with_xi(game: &MatrixGameSpec, xi: Vec<Vec<f64>>) -> Result<Self> {
        let n = game.players();
        check_len("xi rows", n, xi.len())?;
        for row in &xi {
            check_len("xi columns", n, row.len())?;
        }
        Ok(Self {
            game: game.clone(),
            xi,
        })
    }

    pub fn game(&self) -> &MatrixGameSpec {
        &self.game
    }

    pub fn xi(&self) -> &[Vec<f64>] {
        &self.xi
    }

    /// Simplex sizes making up adversary `i`'s strategy.
    pub fn adversary_sizes(&self, i: usize) -> Vec<usize> {
        let m = self.game.flattened(i);
        match self.game.risk_mode() {
            RiskMode::Aggregate => m.block_sizes.clone(),
            RiskMode::ActionDependent => (0..m.rows)
                .flat_map(|_| m.block_sizes.iter().copied())
                .collect(),
        }
    }

    pub fn uniform_profile(&self) -> AuxProfile {
        let uniform = |sizes: &[usize]| -> Vec<f64> {
            sizes
                .iter()
                .flat_map(|&n| std::iter::repeat_n(1.0 / n as f64, n))
                .collect()
        };
        AuxProfile {
            pi: self
                .game
                .action_counts()
                .iter()
                .map(|&n| vec![1.0 / n as f64; n])
                .collect(),
            adversary: (0..self.game.players())
                .map(|i| uniform(&self.adversary_sizes(i)))
                .collect(),
        }
    }

    /// Sum of the penalty terms of adversary `i` (per row in action-dependent
    /// mode, weighted by `pi_i(a)`).
    fn penalty(&self, i: usize, prof: &AuxProfile) -> f64 {
        let m = self.game.flattened(i);
        let spec = self.game.risk()[i];
        let p = &prof.adversary[i];
        let row_penalty = |row: &[f64]| -> f64 {
            m.blocks
                .iter()
                .zip(&m.block_sizes)
                .map(|(&(j, off), &size)| spec.penalty(&row[off..off + size], &prof.pi[j]))
                .sum()
        };
        match self.game.risk_mode() {
            RiskMode::Aggregate => row_penalty(p),
            RiskMode::ActionDependent => (0..m.rows)
                .map(|a| {
                    let w = prof.pi[i][a];
                    if w == 0.0 {
                        0.0
                    } else {
                        w * row_penalty(&p[a * m.cols..(a + 1) * m.cols])
                    }
                })
                .sum(),
        }
    }

    /// `pi_i^T M_i p_i`, or `sum_a pi_i(a) <M_i(a, .), p_{i,a}>`.
    fn bilinear(&self, i: usize, prof: &AuxProfile) -> f64 {
        let m = self.game.flattened(i);
        let p = &prof.adversary[i];
        let pi = &prof.pi[i];
        match self.game.risk_mode() {
            RiskMode::Aggregate => (0..m.rows)
                .map(|a| pi[a] * m.row(a).iter().zip(p).map(|(x, y)| x * y).sum::<f64>())
                .sum(),
            RiskMode::ActionDependent => (0..m.rows)
                .map(|a| {
                    let row = &p[a * m.cols..(a + 1) * m.cols];
                    pi[a] * m.row(a).iter().zip(row).map(|(x, y)| x * y).sum::<f64>()
                })
                .sum(),
        }
    }

    fn own_regularizer(&self, i: usize, prof: &AuxProfile) -> f64 {
        let r = self.game.rationality()[i];
        r.epsilon * r.kind.value(&prof.pi[i])
    }

    /// `xi`-weighted regularizers charged to adversary `i`.
    fn charged_regularizers(&self, i: usize, prof: &AuxProfile) -> f64 {
        let agg = self.game.risk_mode() == RiskMode::Aggregate;
        (0..self.game.players())
            .filter(|&j| !(agg && j == i))
            .map(|j| {
                let x = self.xi[i][j];
                if x == 0.0 {
                    0.0
                } else {
                    x * self.game.rationality()[j].kind.value(&prof.pi[j])
                }
            })
            .sum()
    }

    /// `J_i`.
    pub fn player_loss(&self, i: usize, prof: &AuxProfile) -> f64 {
        -self.bilinear(i, prof) - self.penalty(i, prof) + self.own_regularizer(i, prof)
    }

    /// `Jbar_i`.
    pub fn adversary_loss(&self, i: usize, prof: &AuxProfile) -> f64 {
        self.bilinear(i, prof) + self.penalty(i, prof) - self.charged_regularizers(i, prof)
    }

    /// Right-hand side of `J_i + Jbar_i`, which contains no payoff terms.
    pub fn pair_sum(&self, i: usize, prof: &AuxProfile) -> f64 {
        self.own_regularizer(i, prof) - self.charged_regularizers(i, prof)
    }

    /// Gradient of `J_i` in `pi_i`.
    pub fn player_grad(&self, i: usize, prof: &AuxProfile, out: &mut [f64]) {
        let r = self.game.rationality()[i];
        r.kind.gradient(&prof.pi[i], out);
        for v in out.iter_mut() {
            *v *= r.epsilon;
        }
        self.add_player_linear_grad(i, prof, out);
    }

    /// Gradient of `J_i` without the regularizer `eps_i nu_i(pi_i)`.
    pub fn player_linear_grad(&self, i: usize, prof: &AuxProfile, out: &mut [f64]) {
        out.fill(0.0);
        self.add_player_linear_grad(i, prof, out);
    }

    fn add_player_linear_grad(&self, i: usize, prof: &AuxProfile, out: &mut [f64]) {
        let m = self.game.flattened(i);
        let p = &prof.adversary[i];
        match self.game.risk_mode() {
            RiskMode::Aggregate => {
                for (a, o) in out.iter_mut().enumerate() {
                    *o -= m.row(a).iter().zip(p).map(|(x, y)| x * y).sum::<f64>();
                }
            }
            RiskMode::ActionDependent => {
                let spec = self.game.risk()[i];
                for (a, o) in out.iter_mut().enumerate() {
                    let row = &p[a * m.cols..(a + 1) * m.cols];
                    *o -= m.row(a).iter().zip(row).map(|(x, y)| x * y).sum::<f64>();
                    for (&(j, off), &size) in m.blocks.iter().zip(&m.block_sizes) {
                        *o -= spec.penalty(&row[off..off + size], &prof.pi[j]);
                    }
                }
            }
        }
    }

    /// Gradient of `Jbar_i` in `p_i`.
    pub fn adversary_grad(&self, i: usize, prof: &AuxProfile, out: &mut [f64]) {
        let m = self.game.flattened(i);
        let spec = self.game.risk()[i];
        let p = &prof.adversary[i];
        let rows = self.adversary_rows(i);
        for r in 0..rows {
            let base = r * m.cols;
            for (&(j, off), &size) in m.blocks.iter().zip(&m.block_sizes) {
                let range = base + off..base + off + size;
                spec.penalty_grad(&p[range.clone()], &prof.pi[j], &mut out[range]);
            }
            let w = self.row_weight(i, prof, r);
            for o in &mut out[base..base + m.cols] {
                *o *= w;
            }
        }
        let mut lin = vec![0.0; out.len()];
        self.adversary_linear_grad(i, prof, &mut lin);
        for (o, l) in out.iter_mut().zip(lin) {
            *o += l;
        }
    }

    /// Gradient of the payoff term of `Jbar_i` in `p_i`.
    pub fn adversary_linear_grad(&self, i: usize, prof: &AuxProfile, out: &mut [f64]) {
        let m = self.game.flattened(i);
        let pi = &prof.pi[i];
        match self.game.risk_mode() {
            RiskMode::Aggregate => {
                for (c, o) in out.iter_mut().enumerate() {
                    *o = (0..m.rows).map(|a| pi[a] * m.at(a, c)).sum::<f64>();
                }
            }
            RiskMode::ActionDependent => {
                for a in 0..m.rows {
                    for c in 0..m.cols {
                        out[a * m.cols + c] = pi[a] * m.at(a, c);
                    }
                }
            }
        }
    }

    /// Number of rows of opponent blocks held by adversary `i`.
    pub(crate) fn adversary_rows(&self, i: usize) -> usize {
        match self.game.risk_mode() {
            RiskMode::Aggregate => 1,
            RiskMode::ActionDependent => self.game.flattened(i).rows,
        }
    }

    /// Weight of the penalty on row `r` of adversary `i`.
    pub(crate) fn row_weight(&self, i: usize, prof: &AuxProfile, r: usize) -> f64 {
        match self.game.risk_mode() {
            RiskMode::Aggregate => 1.0,
            RiskMode::ActionDependent => prof.pi[i][r],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::RationalitySpec;
    use crate::risk::RiskSpec;
    use approx::assert_abs_diff_eq;

    fn game(mode: RiskMode) -> MatrixGameSpec {
        let r1 = vec![vec![2.0, -1.0, 0.5], vec![0.0, 1.5, -0.5]];
        let r2 = vec![vec![-1.0, 0.3, 0.2], vec![0.7, -0.4, 1.0]];
        MatrixGameSpec::two_player(
            &r1,
            &r2,
            [RiskSpec::kl(1.5), RiskSpec::reverse_kl(0.8)],
            [
                RationalitySpec::log_barrier(1.0),
                RationalitySpec::neg_entropy(2.0),
            ],
        )
        .unwrap()
        .with_risk_mode(mode)
    }

    fn profile(aux: &AuxiliaryGame) -> AuxProfile {
        let mut prof = aux.uniform_profile();
        prof.pi[0] = vec![0.3, 0.7];
        prof.pi[1] = vec![0.5, 0.2, 0.3];
        for (i, p) in prof.adversary.iter_mut().enumerate() {
            let sizes = aux.adversary_sizes(i);
            let mut off = 0;
            for n in sizes {
                let w: Vec<f64> = (0..n).map(|k| 1.0 + k as f64 * (i + 1) as f64).collect();
                let z: f64 = w.iter().sum();
                for k in 0..n {
                    p[off + k] = w[k] / z;
                }
                off += n;
            }
        }
        prof
    }

    #[test]
    fn gradients_match_finite_differences() {
        for mode in [RiskMode::Aggregate, RiskMode::ActionDependent] {
            let aux = build_auxiliary(&game(mode));
            let prof = profile(&aux);
            let h = 1e-6;
            for i in 0..2 {
                let mut g = vec![0.0; prof.pi[i].len()];
                aux.player_grad(i, &prof, &mut g);
                for k in 0..g.len() {
                    let mut up = prof.clone();
                    up.pi[i][k] += h;
                    let mut dn = prof.clone();
                    dn.pi[i][k] -= h;
                    let fd = (aux.player_loss(i, &up) - aux.player_loss(i, &dn)) / (2.0 * h);
                    assert_abs_diff_eq!(g[k], fd, epsilon = 1e-6);
                }
                let mut g = vec![0.0; prof.adversary[i].len()];
                aux.adversary_grad(i, &prof, &mut g);
                for k in 0..g.len() {
                    let mut up = prof.clone();
                    up.adversary[i][k] += h;
                    let mut dn = prof.clone();
                    dn.adversary[i][k] -= h;
                    let fd = (aux.adversary_loss(i, &up) - aux.adversary_loss(i, &dn)) / (2.0 * h);
                    assert_abs_diff_eq!(g[k], fd, epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn payoff_terms_cancel_in_each_pair() {
        for mode in [RiskMode::Aggregate, RiskMode::ActionDependent] {
            let aux = build_auxiliary(&game(mode));
            let prof = profile(&aux);
            for i in 0..2 {
                let lhs = aux.player_loss(i, &prof) + aux.adversary_loss(i, &prof);
                assert_abs_diff_eq!(lhs, aux.pair_sum(i, &prof), epsilon = 1e-12);
            }
        }
    }
}
