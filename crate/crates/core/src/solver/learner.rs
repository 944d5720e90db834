//! Simultaneous constant-step gradient descent for all 2n players of the
//! auxiliary game.

use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Dirichlet;
use serde::{Deserialize, Serialize};

use super::aux::{AuxProfile, AuxiliaryGame};
use crate::error::{invalid, Error, Result};
use crate::risk::RiskSpec;
use crate::simplex::{
    project_floored_in_place, prox_l1_centered, prox_log_barrier, prox_neg_entropy, Regularizer,
    INTERIOR_FLOOR,
};

/// Starting point of the learner.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initialization {
    #[default]
    Uniform,
    /// Independent Dirichlet(1) draws seeded by the learner seed, mixed
    /// with the uniform distribution by [`LearnerConfig::init_weight`].
    Random,
}

/// How each learner step handles the strongly convex terms of its loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// Plain gradient step on the full loss followed by projection.
    Projected,
    /// Gradient step on the payoff terms followed by the exact proximal map
    /// of the regularizer (players) or penalty (adversaries). Stable for any
    /// step size however stiff the regularizer is near the boundary.
    #[default]
    Proximal,
}

/// Settings for [`run_no_regret`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub step_size: f64,
    pub iterations: usize,
    pub seed: u64,
    pub init: Initialization,
    pub update: UpdateRule,
    /// Weight of the random draw against uniform in a random start. Starts
    /// near the boundary make fixed-step descent on barrier regularizers
    /// unstable.
    pub init_weight: f64,
    /// Fraction of the run discarded before averaging starts.
    pub burn_in: f64,
    /// Keep every iterate in the trajectory.
    pub record_iterates: bool,
    /// Number of regret checkpoints spread over the run.
    pub regret_checkpoints: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            step_size: 5e-4,
            iterations: 10_000,
            seed: 0,
            init: Initialization::Uniform,
            update: UpdateRule::Proximal,
            init_weight: 0.5,
            burn_in: 0.5,
            record_iterates: false,
            regret_checkpoints: 20,
        }
    }
}

/// Cumulative linearized regret of every player at one iteration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegretCheckpoint {
    pub iteration: usize,
    pub players: Vec<f64>,
    pub adversaries: Vec<f64>,
}

/// Output of a learning run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnerTrajectory {
    pub averages: AuxProfile,
    pub last: AuxProfile,
    pub iterations: usize,
    pub step_size: f64,
    pub averaged_from: usize,
    pub regret: Vec<RegretCheckpoint>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub iterates: Vec<AuxProfile>,
}

struct Regret {
    played: f64,
    grad_sum: Vec<f64>,
}

impl Regret {
    fn new(dim: usize) -> Self {
        Self {
            played: 0.0,
            grad_sum: vec![0.0; dim],
        }
    }

    fn record(&mut self, g: &[f64], x: &[f64]) {
        for (k, (&gk, &xk)) in g.iter().zip(x).enumerate() {
            self.played += gk * xk;
            self.grad_sum[k] += gk;
        }
    }

    /// `sum_t <g_t, x_t> - min_x <sum_t g_t, x>`; bounds the true regret of
    /// convex losses from above.
    fn value(&self, sizes: &[usize]) -> f64 {
        let mut off = 0;
        let mut best = 0.0;
        for &n in sizes {
            best += self.grad_sum[off..off + n]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            off += n;
        }
        self.played - best
    }
}

fn random_block(rng: &mut ChaCha8Rng, sizes: &[usize], weight: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for &n in sizes {
        if n == 1 {
            out.push(1.0);
        } else {
            let u = 1.0 / n as f64;
            let d = Dirichlet::new_with_size(1.0, n).unwrap().sample(rng);
            out.extend(d.into_iter().map(|x| (1.0 - weight) * u + weight * x));
        }
    }
    out
}

fn project_blocks(x: &mut [f64], sizes: &[usize]) {
    let mut off = 0;
    for &n in sizes {
        project_floored_in_place(&mut x[off..off + n], INTERIOR_FLOOR);
        off += n;
    }
}

fn prox_player(aux: &AuxiliaryGame, pi: &mut [f64], lin: &[f64], eta: f64, i: usize) {
    let r = aux.game().rationality()[i];
    let y: Vec<f64> = pi.iter().zip(lin).map(|(x, g)| x - eta * g).collect();
    let prev = pi.to_vec();
    let c = eta * r.epsilon;
    match r.kind {
        Regularizer::LogBarrier => prox_log_barrier(&y, c, None, Some(&prev), pi),
        Regularizer::NegEntropy => prox_neg_entropy(&y, c, Some(&prev), pi),
    }
    if pi.iter().any(|&x| x < INTERIOR_FLOOR) {
        project_floored_in_place(pi, INTERIOR_FLOOR);
    }
}

/// Proximal step of adversary `i` on its penalty, with the payoff term taken
/// explicitly. Uses the players' strategies of the current iterate.
fn prox_adversary(
    aux: &AuxiliaryGame,
    cur: &AuxProfile,
    i: usize,
    lin: &[f64],
    eta: f64,
) -> Vec<f64> {
    let game = aux.game();
    let m = game.flattened(i);
    let spec = game.risk()[i];
    let p = &cur.adversary[i];
    let mut out = vec![0.0; p.len()];
    let mut y = Vec::new();
    for r in 0..aux.adversary_rows(i) {
        let w = aux.row_weight(i, cur, r);
        let base = r * m.cols;
        for (&(j, off), &size) in m.blocks.iter().zip(&m.block_sizes) {
            let range = base + off..base + off + size;
            let reference = &cur.pi[j];
            y.clear();
            y.extend(
                p[range.clone()]
                    .iter()
                    .zip(&lin[range.clone()])
                    .map(|(x, g)| x - eta * g),
            );
            let prev = &p[range.clone()];
            let dst = &mut out[range];
            match spec {
                RiskSpec::Kl { tau } => {
                    let c = eta * w / tau;
                    if c > 0.0 {
                        for (v, q) in y.iter_mut().zip(reference) {
                            *v += c * q.ln();
                        }
                        prox_neg_entropy(&y, c, Some(prev), dst);
                    } else {
                        prox_log_barrier(&y, 0.0, None, None, dst);
                    }
                }
                RiskSpec::ReverseKl { tau } => {
                    prox_log_barrier(&y, eta * w / tau, Some(reference), Some(prev), dst)
                }
                RiskSpec::TotalVariation { lambda } => {
                    prox_l1_centered(&y, eta * w * lambda, reference, dst)
                }
            }
        }
    }
    out
}

/// Runs simultaneous gradient descent with a constant step for every player
/// and adversary and returns strategies averaged after the burn-in. Under
/// [`UpdateRule::Projected`] iterates are projected onto the simplex with
/// every entry at least [`INTERIOR_FLOOR`]; a log-barrier player reaching
/// that floor is reported as a divergence.
pub fn run_no_regret(aux: &AuxiliaryGame, cfg: &LearnerConfig) -> Result<LearnerTrajectory> {
    if !(cfg.step_size > 0.0 && cfg.step_size.is_finite()) {
        return invalid(format!("step size must be positive, got {}", cfg.step_size));
    }
    if cfg.iterations == 0 {
        return invalid("learner needs at least one iteration");
    }
    if !(0.0..=1.0).contains(&cfg.init_weight) {
        return invalid(format!(
            "initial weight must lie in [0, 1], got {}",
            cfg.init_weight
        ));
    }
    if !(0.0..1.0).contains(&cfg.burn_in) {
        return invalid(format!(
            "burn-in fraction must lie in [0, 1), got {}",
            cfg.burn_in
        ));
    }
    let n = aux.game().players();
    let pi_sizes: Vec<Vec<usize>> = aux
        .game()
        .action_counts()
        .iter()
        .map(|&a| vec![a])
        .collect();
    let adv_sizes: Vec<Vec<usize>> = (0..n).map(|i| aux.adversary_sizes(i)).collect();

    let mut cur = aux.uniform_profile();
    if cfg.init == Initialization::Random {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for i in 0..n {
            cur.pi[i] = random_block(&mut rng, &pi_sizes[i], cfg.init_weight);
            cur.adversary[i] = random_block(&mut rng, &adv_sizes[i], cfg.init_weight);
        }
    }
    for i in 0..n {
        project_blocks(&mut cur.pi[i], &pi_sizes[i]);
        project_blocks(&mut cur.adversary[i], &adv_sizes[i]);
    }

    let mut g_pi: Vec<Vec<f64>> = cur.pi.iter().map(|v| vec![0.0; v.len()]).collect();
    let mut g_adv: Vec<Vec<f64>> = cur.adversary.iter().map(|v| vec![0.0; v.len()]).collect();
    let mut sum = AuxProfile {
        pi: cur.pi.iter().map(|v| vec![0.0; v.len()]).collect(),
        adversary: cur.adversary.iter().map(|v| vec![0.0; v.len()]).collect(),
    };
    let mut reg_pi: Vec<Regret> = cur.pi.iter().map(|v| Regret::new(v.len())).collect();
    let mut reg_adv: Vec<Regret> = cur.adversary.iter().map(|v| Regret::new(v.len())).collect();
    let start = (cfg.burn_in * cfg.iterations as f64).floor() as usize;
    let every = (cfg.iterations / cfg.regret_checkpoints.max(1)).max(1);
    let mut checkpoints = Vec::new();
    let mut iterates = Vec::new();
    let eta = cfg.step_size;
    let barrier: Vec<bool> = aux
        .game()
        .rationality()
        .iter()
        .map(|r| r.kind == Regularizer::LogBarrier && r.epsilon > 0.0)
        .collect();

    let mut lin_pi: Vec<Vec<f64>> = g_pi.clone();
    let mut lin_adv: Vec<Vec<f64>> = g_adv.clone();

    for t in 0..cfg.iterations {
        for i in 0..n {
            aux.player_grad(i, &cur, &mut g_pi[i]);
            aux.adversary_grad(i, &cur, &mut g_adv[i]);
        }
        let finite = g_pi.iter().chain(&g_adv).flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Divergence {
                iteration: t,
                step_size: eta,
            });
        }
        for i in 0..n {
            reg_pi[i].record(&g_pi[i], &cur.pi[i]);
            reg_adv[i].record(&g_adv[i], &cur.adversary[i]);
        }
        match cfg.update {
            UpdateRule::Projected => {
                for i in 0..n {
                    for (x, g) in cur.pi[i].iter_mut().zip(&g_pi[i]) {
                        *x -= eta * g;
                    }
                    for (x, g) in cur.adversary[i].iter_mut().zip(&g_adv[i]) {
                        *x -= eta * g;
                    }
                    project_blocks(&mut cur.pi[i], &pi_sizes[i]);
                    project_blocks(&mut cur.adversary[i], &adv_sizes[i]);
                    // a barrier player pushed onto the floor has overshot: its
                    // gradient there is of order epsilon / floor
                    if barrier[i] && cur.pi[i].iter().any(|&x| x <= INTERIOR_FLOOR) {
                        return Err(Error::Divergence {
                            iteration: t,
                            step_size: eta,
                        });
                    }
                }
            }
            UpdateRule::Proximal => {
                for i in 0..n {
                    aux.player_linear_grad(i, &cur, &mut lin_pi[i]);
                    aux.adversary_linear_grad(i, &cur, &mut lin_adv[i]);
                }
                let next_adv: Vec<Vec<f64>> = (0..n)
                    .map(|i| prox_adversary(aux, &cur, i, &lin_adv[i], eta))
                    .collect();
                for i in 0..n {
                    prox_player(aux, &mut cur.pi[i], &lin_pi[i], eta, i);
                }
                cur.adversary = next_adv;
            }
        }
        if t >= start {
            for i in 0..n {
                for (s, x) in sum.pi[i].iter_mut().zip(&cur.pi[i]) {
                    *s += x;
                }
                for (s, x) in sum.adversary[i].iter_mut().zip(&cur.adversary[i]) {
                    *s += x;
                }
            }
        }
        if cfg.record_iterates {
            iterates.push(cur.clone());
        }
        if (t + 1) % every == 0 || t + 1 == cfg.iterations {
            checkpoints.push(RegretCheckpoint {
                iteration: t + 1,
                players: (0..n).map(|i| reg_pi[i].value(&pi_sizes[i])).collect(),
                adversaries: (0..n).map(|i| reg_adv[i].value(&adv_sizes[i])).collect(),
            });
        }
    }

    let count = (cfg.iterations - start) as f64;
    for v in sum.pi.iter_mut().chain(sum.adversary.iter_mut()) {
        for x in v.iter_mut() {
            *x /= count;
        }
    }
    Ok(LearnerTrajectory {
        averages: sum,
        last: cur,
        iterations: cfg.iterations,
        step_size: eta,
        averaged_from: start,
        regret: checkpoints,
        iterates,
    })
}
