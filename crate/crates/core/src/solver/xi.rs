//! Concavity constants linking risk penalties to opponents' regularizers.
//!
//! `xi*(D, nu)` is the smallest `xi` such that `pi -> D(p, pi) - xi nu(pi)` is
//! concave for every `p`. It decides whether the auxiliary game built in
//! [`super::aux`] is a concave game.

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Dirichlet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{MatrixGameSpec, RiskMode};
use crate::risk::RiskSpec;
use crate::simplex::Regularizer;

/// A concavity constant and whether it came from a numeric search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiStar {
    pub value: f64,
    pub numeric: bool,
}

/// Settings for the randomized concavity probe.
#[derive(Clone, Debug)]
pub struct XiSearch {
    pub segments: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub dim: usize,
}

impl Default for XiSearch {
    fn default() -> Self {
        Self {
            segments: 10_000,
            tolerance: 1e-6,
            seed: 0x5eed,
            dim: 3,
        }
    }
}

/// Outcome of a concavity probe.
#[derive(Clone, Debug)]
pub struct ProbeOutcome {
    pub passed: bool,
    pub violations: usize,
    /// Largest midpoint deficit found.
    pub worst: f64,
}

/// `xi*` for a penalty/regularizer pair, using the default numeric search
/// where no closed form is known.
pub fn xi_star(risk: &RiskSpec, reg: Regularizer) -> Result<XiStar> {
    xi_star_with(risk, reg, &XiSearch::default())
}

pub fn xi_star_with(risk: &RiskSpec, reg: Regularizer, search: &XiSearch) -> Result<XiStar> {
    risk.validate()?;
    match (risk, reg) {
        (RiskSpec::Kl { tau }, Regularizer::LogBarrier) | (RiskSpec::ReverseKl { tau }, Regularizer::NegEntropy) => {
            Ok(XiStar {
                value: 1.0 / tau,
                numeric: false,
            })
        }
        (RiskSpec::Kl { .. }, Regularizer::NegEntropy) => Err(Error::Unsupported(
            "KL penalty with negative entropy: the curvature p/pi^2 of the penalty outgrows xi/pi near the boundary, so no finite xi* exists".into(),
        )),
        (RiskSpec::TotalVariation { .. }, _) => Err(Error::Unsupported(
            "total variation penalty is not differentiable in the reference, so no finite xi* exists".into(),
        )),
        (RiskSpec::ReverseKl { .. }, Regularizer::LogBarrier) => {
            let value = bisect_xi(|xi| concavity_probe(risk, reg, xi, search).passed, risk.weight(), search.tolerance)?;
            Ok(XiStar { value, numeric: true })
        }
    }
}

fn bisect_xi(passes: impl Fn(f64) -> bool, scale: f64, tolerance: f64) -> Result<f64> {
    let mut hi = scale;
    let mut doublings = 0;
    while !passes(hi) {
        hi *= 2.0;
        doublings += 1;
        if doublings > 40 {
            return Err(Error::Unsupported(
                "numeric xi* search found no finite concavity constant".into(),
            ));
        }
    }
    let mut lo = 0.0;
    if passes(lo) {
        return Ok(0.0);
    }
    while hi - lo > tolerance * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if passes(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn sample_point<R: Rng>(rng: &mut R, dim: usize, floor: f64) -> Vec<f64> {
    let mut v = match rng.gen_range(0..4) {
        0 | 1 => Dirichlet::new_with_size(1.0, dim).unwrap().sample(rng),
        2 => Dirichlet::new_with_size(0.3, dim).unwrap().sample(rng),
        _ => {
            let k = rng.gen_range(0..dim);
            let w: f64 = rng.gen_range(0.0..0.2);
            (0..dim)
                .map(|j| w / dim as f64 + if j == k { 1.0 - w } else { 0.0 })
                .collect()
        }
    };
    for x in &mut v {
        *x = x.max(floor);
    }
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

fn sample_reference<R: Rng>(rng: &mut R, dim: usize, floor: f64) -> Vec<f64> {
    if rng.gen_bool(0.4) {
        let k = rng.gen_range(0..dim);
        let mut v = vec![floor; dim];
        v[k] = 1.0 - floor * (dim - 1) as f64;
        v
    } else {
        sample_point(rng, dim, floor)
    }
}

/// Half the segments join two random points; the rest are short segments
/// around a random center, which resolve local curvature.
fn sample_segment<R: Rng>(rng: &mut R, dim: usize) -> (Vec<f64>, Vec<f64>) {
    const FLOOR: f64 = 1e-6;
    if rng.gen_bool(0.5) {
        return (sample_point(rng, dim, FLOOR), sample_point(rng, dim, FLOOR));
    }
    let c = sample_point(rng, dim, FLOOR);
    let mut dir: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean = dir.iter().sum::<f64>() / dim as f64;
    dir.iter_mut().for_each(|v| *v -= mean);
    // largest step keeping both endpoints above the floor
    let mut reach = f64::INFINITY;
    for (&ck, &vk) in c.iter().zip(&dir) {
        if vk.abs() > 0.0 {
            reach = reach.min((ck - FLOOR).max(0.0) / vk.abs());
        }
    }
    let len = reach * 10f64.powf(rng.gen_range(-3.0..0.0));
    let a = c.iter().zip(&dir).map(|(x, v)| x + len * v).collect();
    let b = c.iter().zip(&dir).map(|(x, v)| x - len * v).collect();
    (a, b)
}

/// Checks midpoint concavity of `pi -> D(p, pi) - xi nu(pi)` on random
/// segments and random `p`.
pub fn concavity_probe(
    risk: &RiskSpec,
    reg: Regularizer,
    xi: f64,
    search: &XiSearch,
) -> ProbeOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let d = search.dim.max(2);
    // KL needs pi > 0 on the support of p; reverse KL needs p > 0
    let p_floor = if matches!(risk, RiskSpec::ReverseKl { .. }) {
        1e-9
    } else {
        0.0
    };
    let h = |p: &[f64], pi: &[f64]| risk.penalty(p, pi) - xi * reg.value(pi);
    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..search.segments {
        let p = sample_reference(&mut rng, d, p_floor);
        let (a, b) = sample_segment(&mut rng, d);
        let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let (ha, hb, hm) = (h(&p, &a), h(&p, &b), h(&p, &m));
        let deficit = 0.5 * (ha + hb) - hm;
        let slack = 1e-10 * (1.0 + ha.abs() + hb.abs());
        if deficit > slack {
            violations += 1;
            worst = worst.max(deficit);
        }
    }
    ProbeOutcome {
        passed: violations == 0,
        violations,
        worst,
    }
}

/// Which sufficient condition applies to a game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TractabilityCondition {
    /// `epsilon_1 / xi_1 >= xi_2 / epsilon_2`
    TwoPlayer,
    /// `epsilon_i >= sum_{j != i} xi_{j,i}`
    AggregateNPlayer,
    /// `epsilon_i >= sum_j xi_{i,j}`
    ActionDependent,
}

/// Result of checking the tractability condition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TractabilityRecord {
    pub condition: TractabilityCondition,
    pub holds: bool,
    /// Slack of each inequality; nonnegative when it holds.
    pub margins: Vec<f64>,
    /// `xi[i][j]` weights `nu_j` in adversary `i`'s loss; `None` where no
    /// finite constant exists.
    pub xi: Vec<Vec<Option<f64>>>,
    pub numeric: bool,
    pub note: Option<String>,
}

const MARGIN_SLACK: f64 = 1e-12;

/// Evaluates the sufficient condition under which the auxiliary game is
/// concave and its equilibria collapse to RQE of the original game.
pub fn check_tractability(game: &MatrixGameSpec) -> Result<TractabilityRecord> {
    let n = game.players();
    let eps: Vec<f64> = game.rationality().iter().map(|r| r.epsilon).collect();
    match game.risk_mode() {
        RiskMode::Aggregate => {
            let mut xi = vec![vec![None; n]; n];
            let mut numeric = false;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        let x = xi_star(&game.risk()[i], game.rationality()[j].kind)?;
                        numeric |= x.numeric;
                        xi[i][j] = Some(x.value);
                    }
                }
            }
            let get = |i: usize, j: usize| xi[i][j].unwrap_or(0.0);
            if n == 2 {
                let (x1, x2) = (get(0, 1), get(1, 0));
                let lhs = if x1 > 0.0 { eps[0] / x1 } else { f64::INFINITY };
                let margin = lhs - x2 / eps[1];
                Ok(TractabilityRecord {
                    condition: TractabilityCondition::TwoPlayer,
                    holds: margin >= -MARGIN_SLACK * lhs.abs().max(1.0),
                    margins: vec![margin],
                    xi,
                    numeric,
                    note: None,
                })
            } else {
                let margins: Vec<f64> = (0..n)
                    .map(|i| eps[i] - (0..n).filter(|&j| j != i).map(|j| get(j, i)).sum::<f64>())
                    .collect();
                Ok(TractabilityRecord {
                    condition: TractabilityCondition::AggregateNPlayer,
                    holds: margins
                        .iter()
                        .zip(&eps)
                        .all(|(m, e)| *m >= -MARGIN_SLACK * e.max(1.0)),
                    margins,
                    xi,
                    numeric,
                    note: None,
                })
            }
        }
        RiskMode::ActionDependent => {
            let mut xi = vec![vec![None; n]; n];
            let mut margins = Vec::with_capacity(n);
            for i in 0..n {
                let c = action_dependent_xi(game, i, &XiSearch::default())?;
                for j in 0..n {
                    xi[i][j] = Some(c);
                }
                margins.push(eps[i] - n as f64 * c);
            }
            Ok(TractabilityRecord {
                condition: TractabilityCondition::ActionDependent,
                holds: margins
                    .iter()
                    .zip(&eps)
                    .all(|(m, e)| *m >= -MARGIN_SLACK * e.max(1.0)),
                margins,
                xi,
                numeric: true,
                note: Some(
                    "action-dependent constants use a common numeric xi per adversary".into(),
                ),
            })
        }
    }
}

/// Smallest common `c` making
/// `pi -> sum_a pi_i(a) sum_j D_i(p_{a,j}, pi_j) - c sum_k nu_k(pi_k)`
/// concave on random probes.
pub fn action_dependent_xi(game: &MatrixGameSpec, i: usize, search: &XiSearch) -> Result<f64> {
    let n = game.players();
    let risk = game.risk()[i];
    if !risk.is_smooth() {
        return Err(Error::Unsupported(
            "total variation penalty is not differentiable in the reference, so no finite xi* exists".into(),
        ));
    }
    let dims: Vec<usize> = game
        .action_counts()
        .iter()
        .map(|&a| a.clamp(2, 4))
        .collect();
    let regs: Vec<Regularizer> = game.rationality().iter().map(|r| r.kind).collect();
    let p_floor = 1e-6;
    let passes = |c: f64| -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(search.seed ^ i as u64);
        let phi = |rows: &[Vec<Vec<f64>>], pi: &[Vec<f64>]| -> f64 {
            let mut v = 0.0;
            for (a, row) in rows.iter().enumerate() {
                let mut inner = 0.0;
                for (j, p) in row.iter().enumerate() {
                    if j != i {
                        inner += risk.penalty(p, &pi[j]);
                    }
                }
                v += pi[i][a] * inner;
            }
            for k in 0..n {
                v -= c * regs[k].value(&pi[k]);
            }
            v
        };
        for _ in 0..search.segments / 4 {
            let rows: Vec<Vec<Vec<f64>>> = (0..dims[i])
                .map(|_| {
                    (0..n)
                        .map(|j| sample_reference(&mut rng, dims[j], p_floor))
                        .collect()
                })
                .collect();
            let a: Vec<Vec<f64>> = dims
                .iter()
                .map(|&d| sample_point(&mut rng, d, 1e-6))
                .collect();
            let b: Vec<Vec<f64>> = dims
                .iter()
                .map(|&d| sample_point(&mut rng, d, 1e-6))
                .collect();
            let m: Vec<Vec<f64>> = a
                .iter()
                .zip(&b)
                .map(|(x, y)| x.iter().zip(y).map(|(u, v)| 0.5 * (u + v)).collect())
                .collect();
            let (fa, fb, fm) = (phi(&rows, &a), phi(&rows, &b), phi(&rows, &m));
            if 0.5 * (fa + fb) - fm > 1e-10 * (1.0 + fa.abs() + fb.abs()) {
                return false;
            }
        }
        true
    };
    bisect_xi(passes, risk.weight(), search.tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::RationalitySpec;

    #[test]
    fn closed_forms() {
        assert_eq!(
            xi_star(&RiskSpec::kl(2.0), Regularizer::LogBarrier)
                .unwrap()
                .value,
            0.5
        );
        assert_eq!(
            xi_star(&RiskSpec::reverse_kl(4.0), Regularizer::NegEntropy)
                .unwrap()
                .value,
            0.25
        );
        assert!(xi_star(&RiskSpec::total_variation(1.0), Regularizer::LogBarrier).is_err());
        assert!(xi_star(&RiskSpec::kl(1.0), Regularizer::NegEntropy).is_err());
    }

    #[test]
    fn reverse_kl_with_barrier_is_found_numerically() {
        // On the tangent space of the simplex the constant is
        // sup x y (x + y) / (tau (x^2 + y^2)) = 1 / (2 tau), attained at pi = (1/2, 1/2).
        let x = xi_star(&RiskSpec::reverse_kl(2.0), Regularizer::LogBarrier).unwrap();
        assert!(x.numeric);
        assert!(x.value <= 0.25 + 1e-6 && x.value > 0.24, "{}", x.value);
    }

    #[test]
    fn boundary_parameters_hold_with_zero_margin() {
        let r = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let g = MatrixGameSpec::two_player(
            &r,
            &r,
            [RiskSpec::kl(2.0), RiskSpec::kl(0.5)],
            [
                RationalitySpec::log_barrier(0.5),
                RationalitySpec::log_barrier(2.0),
            ],
        )
        .unwrap();
        let rec = check_tractability(&g).unwrap();
        assert!(rec.holds);
        assert_eq!(rec.margins, vec![0.0]);
    }
}
