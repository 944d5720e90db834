//! Two-agent cliff walk on a grid.
//!
//! Each agent occupies a cell or a terminal `DONE` marker, and the joint
//! state is the pair. An agent standing on a cliff or goal cell collects that
//! cell's reward for one step and then moves to `DONE`, where it stays with
//! zero reward. Rewards are paid on occupancy, so a fall shows up in the next
//! step's value, which is what the environment risk acts on.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{
    sample_trajectory, MarkovDynamics, MarkovGameSpec, MarkovParameters, PolicyProfile,
    TransitionRow,
};
use crate::matrix::RationalitySpec;
use crate::risk::RiskSpec;

/// Moves in action order: up, down, left, right.
pub const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
pub const ACTION_NAMES: [&str; 4] = ["up", "down", "left", "right"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CliffVariant {
    Kl,
    L1,
}

impl fmt::Display for CliffVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Kl => "kl",
            Self::L1 => "l1",
        })
    }
}

impl FromStr for CliffVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(Self::Kl),
            "l1" | "tv" => Ok(Self::L1),
            _ => Err(Error::InvalidInput(format!("unknown cliff variant {s:?}"))),
        }
    }
}

/// Row and column of a cell.
pub type Cell = (usize, usize);

/// Layout, rewards and move noise of a cliff walk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridWorld {
    pub width: usize,
    pub height: usize,
    pub cliff: Vec<Cell>,
    pub starts: [Cell; 2],
    pub goals: [Cell; 2],
    pub step_reward: f64,
    pub cliff_reward: f64,
    pub goal_reward: f64,
    /// Probability of moving in the chosen direction.
    pub p_move: f64,
    /// Replaces `p_move` while both agents are active and at Chebyshev
    /// distance at most one.
    pub p_degraded: f64,
    pub horizon: usize,
}

/// Optional replacements for the defaults of a variant.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CliffOverrides {
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub horizon: Option<usize>,
    pub step_reward: Option<f64>,
    pub cliff_reward: Option<f64>,
    pub goal_reward: Option<f64>,
    pub p_move: Option<f64>,
    pub p_degraded: Option<f64>,
    pub params: Option<MarkovParameters>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Active(Cell),
    Terminal,
    Done,
}

impl GridWorld {
    /// Default layout of `variant` on a `width x height` grid.
    ///
    /// Agent 1 starts one row above the bottom and walks to the bottom-right
    /// corner; agent 2 starts in the second row and walks to the top-right
    /// corner. From height 3 on, the bottom row is cliff except for its last
    /// cell.
    pub fn new(variant: CliffVariant, width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidInput(format!(
                "grid must be at least 2x2, got {width}x{height}"
            )));
        }
        let col = (width / 2).max(1) - 1;
        let mut cliff = Vec::new();
        if height >= 3 {
            cliff.extend((0..width - 1).map(|c| (height - 1, c)));
        }
        let top = if height >= 4 { 1 } else { 0 };
        let (step_reward, cliff_reward, goal_reward, horizon) = match variant {
            CliffVariant::Kl => (0.0, -2.0, 1.0, 200),
            CliffVariant::L1 => (-0.1, -100.0, 20.0, 100),
        };
        let g = Self {
            width,
            height,
            cliff,
            starts: [(height - 2, col), (top, col)],
            goals: [(height - 1, width - 1), (0, width - 1)],
            step_reward,
            cliff_reward,
            goal_reward,
            p_move: 0.9,
            p_degraded: 0.5,
            horizon,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.width < 2 || self.height < 2 {
            return bad(format!(
                "grid must be at least 2x2, got {}x{}",
                self.width, self.height
            ));
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        for (name, p) in [("p_move", self.p_move), ("p_degraded", self.p_degraded)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        for r in [self.step_reward, self.cliff_reward, self.goal_reward] {
            if !r.is_finite() {
                return bad("rewards must be finite".into());
            }
        }
        let inside = |c: &Cell| c.0 < self.height && c.1 < self.width;
        for c in self.cliff.iter().chain(&self.starts).chain(&self.goals) {
            if !inside(c) {
                return bad(format!(
                    "cell {c:?} lies outside the {}x{} grid",
                    self.height, self.width
                ));
            }
        }
        for (i, s) in self.starts.iter().enumerate() {
            if self.cliff.contains(s) || self.goals.contains(s) {
                return bad(format!("start of agent {} is a cliff or goal cell", i + 1));
            }
        }
        for (i, g) in self.goals.iter().enumerate() {
            if self.cliff.contains(g) {
                return bad(format!("goal of agent {} is a cliff cell", i + 1));
            }
        }
        Ok(())
    }

    /// Grid cells plus the `DONE` marker.
    pub fn agent_positions(&self) -> usize {
        self.width * self.height + 1
    }

    pub fn states(&self) -> usize {
        self.agent_positions().pow(2)
    }

    /// Position index of a cell; `DONE` is `width * height`.
    pub fn position(&self, c: Cell) -> usize {
        c.0 * self.width + c.1
    }

    pub fn done(&self) -> usize {
        self.width * self.height
    }

    pub fn encode(&self, pos: [usize; 2]) -> usize {
        pos[0] * self.agent_positions() + pos[1]
    }

    pub fn decode(&self, s: usize) -> [usize; 2] {
        [s / self.agent_positions(), s % self.agent_positions()]
    }

    /// The cell at position `p`, or `None` for `DONE`.
    pub fn cell(&self, p: usize) -> Option<Cell> {
        (p < self.done()).then(|| (p / self.width, p % self.width))
    }

    pub fn is_cliff(&self, p: usize) -> bool {
        self.cell(p).is_some_and(|c| self.cliff.contains(&c))
    }

    fn status(&self, i: usize, p: usize) -> Status {
        match self.cell(p) {
            None => Status::Done,
            Some(c) if self.cliff.contains(&c) || c == self.goals[i] => Status::Terminal,
            Some(c) => Status::Active(c),
        }
    }

    fn reward(&self, i: usize, p: usize) -> f64 {
        match self.cell(p) {
            None => 0.0,
            Some(c) if self.cliff.contains(&c) => self.cliff_reward,
            Some(c) if c == self.goals[i] => self.goal_reward,
            Some(_) => self.step_reward,
        }
    }

    fn shifted(&self, c: Cell, m: (isize, isize)) -> Cell {
        let r = c.0 as isize + m.0;
        let k = c.1 as isize + m.1;
        if r < 0 || k < 0 || r >= self.height as isize || k >= self.width as isize {
            c
        } else {
            (r as usize, k as usize)
        }
    }

    /// Next-position distribution of agent `i` from position `p`.
    fn agent_moves(&self, i: usize, p: usize, action: usize, p_dir: f64) -> Vec<(usize, f64)> {
        match self.status(i, p) {
            Status::Done | Status::Terminal => vec![(self.done(), 1.0)],
            Status::Active(c) => {
                let off = (1.0 - p_dir) / 3.0;
                let mut out: Vec<(usize, f64)> = Vec::with_capacity(4);
                for (k, &m) in MOVES.iter().enumerate() {
                    let w = if k == action { p_dir } else { off };
                    if w == 0.0 {
                        continue;
                    }
                    let q = self.position(self.shifted(c, m));
                    match out.iter_mut().find(|e| e.0 == q) {
                        Some(e) => e.1 += w,
                        None => out.push((q, w)),
                    }
                }
                out
            }
        }
    }

    /// Move-success probability in the joint position `pos`.
    pub fn move_probability(&self, pos: [usize; 2]) -> f64 {
        match (self.status(0, pos[0]), self.status(1, pos[1])) {
            (Status::Active(a), Status::Active(b))
                if a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1 =>
            {
                self.p_degraded
            }
            _ => self.p_move,
        }
    }

    /// Dynamics with one stationary layer.
    pub fn dynamics(&self) -> Result<MarkovDynamics> {
        self.validate()?;
        let states = self.states();
        let joint = MOVES.len() * MOVES.len();
        let mut rewards = vec![vec![0.0; states * joint]; 2];
        let mut transitions = Vec::with_capacity(states * joint);
        for s in 0..states {
            let pos = self.decode(s);
            let p_dir = self.move_probability(pos);
            for a1 in 0..MOVES.len() {
                let m1 = self.agent_moves(0, pos[0], a1, p_dir);
                for a2 in 0..MOVES.len() {
                    let m2 = self.agent_moves(1, pos[1], a2, p_dir);
                    let cell = s * joint + a1 * MOVES.len() + a2;
                    rewards[0][cell] = self.reward(0, pos[0]);
                    rewards[1][cell] = self.reward(1, pos[1]);
                    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(m1.len() * m2.len());
                    for &(q1, w1) in &m1 {
                        for &(q2, w2) in &m2 {
                            entries.push((self.encode([q1, q2]), w1 * w2));
                        }
                    }
                    entries.sort_by_key(|e| e.0);
                    transitions.push(TransitionRow {
                        next: entries.iter().map(|e| e.0).collect(),
                        prob: entries.iter().map(|e| e.1).collect(),
                    });
                }
            }
        }
        Ok(MarkovDynamics {
            horizon: self.horizon,
            states,
            action_counts: vec![MOVES.len(); 2],
            rewards: vec![rewards],
            transitions: vec![transitions],
            initial_state: self
                .encode([self.position(self.starts[0]), self.position(self.starts[1])]),
        })
    }

    pub fn game(&self, params: MarkovParameters) -> Result<MarkovGameSpec> {
        MarkovGameSpec::new(self.dynamics()?, params)
    }

    /// Probability that each agent, and either agent, steps on a cliff cell
    /// during an episode under `policy`, by forward propagation of the state
    /// distribution.
    pub fn cliff_probability(
        &self,
        game: &MarkovGameSpec,
        policy: &PolicyProfile,
    ) -> Result<CliffRisk> {
        policy.check(game)?;
        let states = game.states();
        let step = |dist: &[f64], h: usize| {
            let mut next = vec![0.0; states];
            for (s, &m) in dist.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                let (x, y) = (
                    policy.strategy(0, h, s).probs(),
                    policy.strategy(1, h, s).probs(),
                );
                for (a1, &p1) in x.iter().enumerate() {
                    for (a2, &p2) in y.iter().enumerate() {
                        let w = m * p1 * p2;
                        if w == 0.0 {
                            continue;
                        }
                        let row = game.transition(h, s, a1 * y.len() + a2);
                        for (&t, &q) in row.next.iter().zip(&row.prob) {
                            next[t] += w * q;
                        }
                    }
                }
            }
            next
        };
        // `dist` is the full state distribution; an agent leaves a cliff cell
        // for DONE, so summing occupancy over steps counts each fall once.
        // `clean` carries only the mass on which nobody has fallen yet.
        let mut dist = vec![0.0; states];
        dist[game.initial_state()] = 1.0;
        let mut clean = dist.clone();
        let mut risk = CliffRisk::default();
        for h in 0..=game.horizon() {
            if h > 0 {
                dist = step(&dist, h - 1);
                clean = step(&clean, h - 1);
            }
            for s in 0..states {
                let pos = self.decode(s);
                let f = [self.is_cliff(pos[0]), self.is_cliff(pos[1])];
                for i in 0..2 {
                    if f[i] {
                        risk.agents[i] += dist[s];
                    }
                }
                if f[0] || f[1] {
                    risk.any += clean[s];
                    clean[s] = 0.0;
                }
            }
        }
        Ok(risk)
    }

    /// Monte-Carlo estimate of [`GridWorld::cliff_probability`] from
    /// `rollouts` episodes. Rollout `k` always uses random stream `k` of
    /// `seed`, so different policies can be compared on common random numbers.
    pub fn cliff_frequency(
        &self,
        game: &MarkovGameSpec,
        policy: &PolicyProfile,
        rollouts: usize,
        seed: u64,
    ) -> Result<CliffRisk> {
        policy.check(game)?;
        let hits: Vec<[bool; 2]> = (0..rollouts as u64)
            .into_par_iter()
            .map(|k| {
                let mut rng = crate::markov::rollout_rng(seed, k);
                let t = sample_trajectory(game, policy, game.initial_state(), &mut rng);
                let mut f = [false; 2];
                for &s in &t.states {
                    let pos = self.decode(s);
                    f[0] |= self.is_cliff(pos[0]);
                    f[1] |= self.is_cliff(pos[1]);
                }
                f
            })
            .collect();
        let m = rollouts.max(1) as f64;
        let count =
            |g: &dyn Fn(&[bool; 2]) -> bool| hits.iter().filter(|f| g(f)).count() as f64 / m;
        Ok(CliffRisk {
            agents: [count(&|f| f[0]), count(&|f| f[1])],
            any: count(&|f| f[0] || f[1]),
        })
    }
}

/// Probabilities of stepping on a cliff cell within one episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CliffRisk {
    pub agents: [f64; 2],
    pub any: f64,
}

/// Risk and rationality used by [`cliff_walk`] unless overridden: KL policy
/// risk with a log-barrier regularizer, and an environment penalty of the
/// variant's kind with the same weight.
pub fn default_parameters(variant: CliffVariant) -> MarkovParameters {
    let env = match variant {
        CliffVariant::Kl => RiskSpec::kl(1.0),
        CliffVariant::L1 => RiskSpec::total_variation(1.0),
    };
    MarkovParameters::uniform(2, env, RiskSpec::kl(1.0), RationalitySpec::log_barrier(1.0))
}

/// Grid and game of a cliff walk. Defaults are a 6x6 grid with the variant's
/// rewards and horizon.
pub fn cliff_world(
    variant: CliffVariant,
    overrides: &CliffOverrides,
) -> Result<(GridWorld, MarkovGameSpec)> {
    let mut g = GridWorld::new(
        variant,
        overrides.width.unwrap_or(6),
        overrides.height.unwrap_or(6),
    )?;
    if let Some(h) = overrides.horizon {
        g.horizon = h;
    }
    if let Some(r) = overrides.step_reward {
        g.step_reward = r;
    }
    if let Some(r) = overrides.cliff_reward {
        g.cliff_reward = r;
    }
    if let Some(r) = overrides.goal_reward {
        g.goal_reward = r;
    }
    if let Some(p) = overrides.p_move {
        g.p_move = p;
    }
    if let Some(p) = overrides.p_degraded {
        g.p_degraded = p;
    }
    let params = overrides
        .params
        .clone()
        .unwrap_or_else(|| default_parameters(variant));
    let game = g.game(params)?;
    Ok((g, game))
}

pub fn cliff_walk(variant: CliffVariant, overrides: &CliffOverrides) -> Result<MarkovGameSpec> {
    cliff_world(variant, overrides).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (GridWorld, MarkovGameSpec) {
        let o = CliffOverrides {
            width: Some(4),
            height: Some(4),
            horizon: Some(5),
            ..Default::default()
        };
        cliff_world(CliffVariant::Kl, &o).unwrap()
    }

    #[test]
    fn defaults() {
        let (g, game) = cliff_world(CliffVariant::Kl, &CliffOverrides::default()).unwrap();
        assert_eq!((g.width, g.height, g.horizon), (6, 6, 200));
        assert_eq!(
            (g.step_reward, g.cliff_reward, g.goal_reward),
            (0.0, -2.0, 1.0)
        );
        assert_eq!(g.starts, [(4, 2), (1, 2)]);
        assert_eq!(game.states(), 37 * 37);
        let l1 = GridWorld::new(CliffVariant::L1, 6, 6).unwrap();
        assert_eq!(
            (l1.step_reward, l1.cliff_reward, l1.goal_reward, l1.horizon),
            (-0.1, -100.0, 20.0, 100)
        );
    }

    #[test]
    fn interior_move_probabilities() {
        let (g, game) = small();
        // agent 1 at (2, 2), agent 2 parked on DONE
        let s = g.encode([g.position((2, 2)), g.done()]);
        let row = game.transition(0, s, 0).to_dense(game.states());
        let at = |c: Cell| row[g.encode([g.position(c), g.done()])];
        assert!((at((1, 2)) - 0.9).abs() < 1e-15);
        for c in [(3, 2), (2, 1), (2, 3)] {
            assert!((at(c) - 0.1 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn proximity_degrades_moves() {
        let (g, game) = small();
        let s = g.encode([g.position((2, 1)), g.position((1, 2))]);
        assert_eq!(g.move_probability(g.decode(s)), 0.5);
        let row = game.transition(0, s, 0);
        let dense = row.to_dense(game.states());
        let up_up = g.encode([g.position((1, 1)), g.position((0, 2))]);
        assert!((dense[up_up] - 0.25).abs() < 1e-15);
        let far = g.encode([g.position((2, 0)), g.position((0, 3))]);
        assert_eq!(g.move_probability(g.decode(far)), 0.9);
    }

    #[test]
    fn walls_keep_agent_in_place() {
        let (g, game) = small();
        // right from (2, 3) bumps the wall
        let s = g.encode([g.position((2, 3)), g.done()]);
        let dense = game.transition(0, s, 3 * 4).to_dense(game.states());
        let stay = dense[g.encode([g.position((2, 3)), g.done()])];
        assert!((stay - 0.9).abs() < 1e-15);
    }

    #[test]
    fn terminal_cells_pay_once() {
        let (g, game) = small();
        let cliff = g.position((3, 0));
        let s = g.encode([cliff, g.position(g.goals[1])]);
        assert_eq!(game.reward(0, 0, s, 0), -2.0);
        assert_eq!(game.reward(1, 0, s, 0), 1.0);
        let row = game.transition(0, s, 5);
        assert_eq!(row.next, vec![g.encode([g.done(), g.done()])]);
        let done = g.encode([g.done(), g.done()]);
        assert_eq!(game.reward(0, 0, done, 0), 0.0);
    }

    #[test]
    fn rows_are_distributions() {
        for variant in [CliffVariant::Kl, CliffVariant::L1] {
            for (w, h) in [(2, 2), (3, 3), (4, 4), (6, 6)] {
                let o = CliffOverrides {
                    width: Some(w),
                    height: Some(h),
                    horizon: Some(3),
                    ..Default::default()
                };
                let game = cliff_walk(variant, &o).unwrap();
                for row in game.transition_layer(0) {
                    assert!((row.prob.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn invalid_overrides() {
        let o = CliffOverrides {
            width: Some(1),
            ..Default::default()
        };
        assert!(cliff_walk(CliffVariant::Kl, &o).is_err());
        let o = CliffOverrides {
            horizon: Some(0),
            ..Default::default()
        };
        assert!(cliff_walk(CliffVariant::Kl, &o).is_err());
        let o = CliffOverrides {
            p_move: Some(1.5),
            ..Default::default()
        };
        assert!(cliff_walk(CliffVariant::Kl, &o).is_err());
    }

    #[test]
    fn exact_and_sampled_cliff_risk_agree() {
        let (g, game) = small();
        let policy = PolicyProfile::uniform(&game);
        let exact = g.cliff_probability(&game, &policy).unwrap();
        let mc = g.cliff_frequency(&game, &policy, 20_000, 3).unwrap();
        for i in 0..2 {
            let p = exact.agents[i];
            let se = (p * (1.0 - p) / 20_000.0).sqrt();
            assert!(
                (mc.agents[i] - p).abs() < 4.0 * se + 1e-12,
                "{i}: {} vs {p}",
                mc.agents[i]
            );
        }
        let se = (exact.any * (1.0 - exact.any) / 20_000.0).sqrt();
        assert!((mc.any - exact.any).abs() < 4.0 * se + 1e-12);
        assert!(exact.any <= exact.agents[0] + exact.agents[1] + 1e-12);
        assert!(exact.any >= exact.agents[0].max(exact.agents[1]) - 1e-12);
    }
}
