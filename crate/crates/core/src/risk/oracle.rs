use super::{RiskEvaluation, RiskSpec};
use crate::error::{check_len, invalid, Error, Result};
use crate::simplex::{dot, project_floored_in_place, ProductStrategy, INTERIOR_FLOOR};

/// A concave function on a product of simplices.
pub trait ConcaveObjective {
    fn value(&self, p: &[f64]) -> f64;
    fn supergradient(&self, p: &[f64], out: &mut [f64]);
    /// Smooth objectives get backtracking steps instead of a `1/sqrt(t)` schedule.
    fn is_smooth(&self) -> bool {
        false
    }
}

/// `p -> -<p, x> - sum_j penalty(p_j, q_j)` over a product of simplices.
#[derive(Clone, Debug)]
pub struct PenalizedLinear {
    pub outcomes: Vec<f64>,
    pub reference: Vec<f64>,
    pub sizes: Vec<usize>,
    pub spec: RiskSpec,
}

impl PenalizedLinear {
    pub fn new(outcomes: Vec<f64>, reference: &ProductStrategy, spec: RiskSpec) -> Result<Self> {
        let sizes = reference.sizes();
        check_len(
            "penalized linear objective",
            sizes.iter().sum(),
            outcomes.len(),
        )?;
        spec.validate()?;
        Ok(Self {
            outcomes,
            reference: reference.flat(),
            sizes,
            spec,
        })
    }
}

impl ConcaveObjective for PenalizedLinear {
    fn value(&self, p: &[f64]) -> f64 {
        let mut v = -dot(p, &self.outcomes);
        let mut off = 0;
        for &n in &self.sizes {
            v -= self
                .spec
                .penalty(&p[off..off + n], &self.reference[off..off + n]);
            off += n;
        }
        v
    }

    fn supergradient(&self, p: &[f64], out: &mut [f64]) {
        let mut off = 0;
        for &n in &self.sizes {
            self.spec.penalty_grad(
                &p[off..off + n],
                &self.reference[off..off + n],
                &mut out[off..off + n],
            );
            off += n;
        }
        for (o, x) in out.iter_mut().zip(&self.outcomes) {
            *o = -*o - x;
        }
    }

    fn is_smooth(&self) -> bool {
        self.spec.is_smooth()
    }
}

/// Settings for [`inner_max_oracle`].
#[derive(Clone, Debug)]
pub struct OracleConfig {
    /// Initial step; defaults to `0.5 / scale` with `scale` the largest
    /// supergradient entry at the uniform start.
    pub step: Option<f64>,
    pub max_iters: usize,
    pub tolerance: f64,
    /// Iterates are projected onto `{p >= floor}`.
    pub floor: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            step: None,
            max_iters: 50_000,
            tolerance: 1e-7,
            floor: INTERIOR_FLOOR,
        }
    }
}

/// Maximizes a concave objective over a product of simplices by projected
/// supergradient ascent with iterate averaging.
///
/// Nonsmooth objectives converge at rate `1/sqrt(t)`, so they usually need a
/// looser tolerance than the default. Optima with coordinates below
/// `cfg.floor`, as strongly tilted KL problems have, cannot be certified.
///
/// The returned `gap_bound` is certified: it compares the best value found
/// with an upper bound built from supergradient linearizations.
pub fn inner_max_oracle<O: ConcaveObjective>(
    objective: &O,
    sizes: &[usize],
    cfg: &OracleConfig,
) -> Result<RiskEvaluation> {
    if sizes.is_empty() || sizes.contains(&0) {
        return invalid("oracle feasible set must be a product of nonempty simplices");
    }
    let dim: usize = sizes.iter().sum();
    let mut p: Vec<f64> = sizes
        .iter()
        .flat_map(|&n| std::iter::repeat_n(1.0 / n as f64, n))
        .collect();
    let mut g = vec![0.0; dim];
    let mut value = objective.value(&p);
    objective.supergradient(&p, &mut g);

    let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
    let eta0 = cfg.step.unwrap_or(0.5 / scale);
    let mut eta = eta0;
    let smooth = objective.is_smooth();

    let mut best_value = value;
    let mut best = p.clone();
    let mut avg = vec![0.0; dim];
    let mut upper = f64::INFINITY;
    let mut lin_const = 0.0;
    let mut lin_grad = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut count = 0.0;
    let mut gap = f64::INFINITY;

    for t in 1..=cfg.max_iters {
        let gp = dot(&g, &p);
        let block_max = block_maxima(&g, sizes);
        upper = upper.min(value + block_max - gp);
        lin_const += value - gp;
        for (a, b) in lin_grad.iter_mut().zip(&g) {
            *a += b;
        }
        count += 1.0;
        let avg_upper = (lin_const + block_maxima(&lin_grad, sizes)) / count;
        gap = upper.min(avg_upper) - best_value;
        if gap <= cfg.tolerance {
            return finish(best, best_value, sizes, gap);
        }

        if smooth {
            let mut accepted = false;
            for _ in 0..60 {
                step_into(&p, &g, eta, sizes, cfg.floor, &mut trial);
                let v = objective.value(&trial);
                let diff: f64 = trial.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
                let model = value + dot(&g, &trial) - gp - diff / (2.0 * eta);
                if v.is_finite() && v >= model - 1e-14 * value.abs().max(1.0) {
                    accepted = true;
                    break;
                }
                eta *= 0.5;
            }
            if !accepted {
                break;
            }
            eta *= 1.5;
        } else {
            step_into(
                &p,
                &g,
                eta0 / (t as f64).sqrt(),
                sizes,
                cfg.floor,
                &mut trial,
            );
        }
        std::mem::swap(&mut p, &mut trial);
        value = objective.value(&p);
        objective.supergradient(&p, &mut g);
        let w = 1.0 / t as f64;
        for (a, b) in avg.iter_mut().zip(&p) {
            *a += w * (b - *a);
        }
        if value > best_value {
            best_value = value;
            best.copy_from_slice(&p);
        }
    }

    let v_avg = objective.value(&avg);
    if v_avg > best_value {
        best_value = v_avg;
        best.copy_from_slice(&avg);
        gap = upper - best_value;
    }
    if gap <= cfg.tolerance {
        return finish(best, best_value, sizes, gap);
    }
    Err(Error::NonConvergence {
        what: "inner maximization oracle".into(),
        iterations: cfg.max_iters,
        residual: gap,
        best,
    })
}

fn block_maxima(g: &[f64], sizes: &[usize]) -> f64 {
    let mut off = 0;
    let mut total = 0.0;
    for &n in sizes {
        total += g[off..off + n]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        off += n;
    }
    total
}

fn step_into(p: &[f64], g: &[f64], eta: f64, sizes: &[usize], floor: f64, out: &mut [f64]) {
    for k in 0..p.len() {
        out[k] = p[k] + eta * g[k];
    }
    let mut off = 0;
    for &n in sizes {
        project_floored_in_place(&mut out[off..off + n], floor);
        off += n;
    }
}

fn finish(best: Vec<f64>, value: f64, sizes: &[usize], gap: f64) -> Result<RiskEvaluation> {
    let mut parts = Vec::with_capacity(sizes.len());
    let mut off = 0;
    for &n in sizes {
        let mut block = best[off..off + n].to_vec();
        let total: f64 = block.iter().sum();
        for v in &mut block {
            *v /= total;
        }
        parts.push(crate::simplex::MixedStrategy::from_vec_unchecked(block));
        off += n;
    }
    Ok(RiskEvaluation {
        value,
        maximizer: ProductStrategy::new(parts)?,
        exact: false,
        gap_bound: gap.max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::dual_risk;
    use crate::simplex::MixedStrategy;

    fn check(x: Vec<f64>, q: Vec<f64>, spec: RiskSpec, tol: f64) {
        let pi = MixedStrategy::new(q).unwrap();
        let closed = dual_risk(&x, &pi, &spec).unwrap().value;
        let reference = ProductStrategy::new(vec![pi]).unwrap();
        let obj = PenalizedLinear::new(x, &reference, spec).unwrap();
        let cfg = OracleConfig {
            tolerance: tol,
            ..Default::default()
        };
        let r = inner_max_oracle(&obj, &reference.sizes(), &cfg).unwrap();
        assert!(r.gap_bound <= tol);
        assert!(
            r.value <= closed + 1e-12 && r.value >= closed - tol,
            "{} vs {closed}",
            r.value
        );
    }

    #[test]
    fn matches_closed_forms_with_interior_optima() {
        check(
            vec![0.3, -0.2, 0.5],
            vec![0.2, 0.5, 0.3],
            RiskSpec::kl(1.0),
            1e-7,
        );
        check(
            vec![1.0, 0.0],
            vec![0.5, 0.5],
            RiskSpec::reverse_kl(2.0),
            1e-7,
        );
    }

    #[test]
    fn handles_the_nonsmooth_total_variation_penalty() {
        check(
            vec![0.3, -0.2, 0.5, 0.1],
            vec![0.1, 0.2, 0.3, 0.4],
            RiskSpec::total_variation(0.4),
            1e-3,
        );
        check(
            vec![2.0, -1.0],
            vec![0.9, 0.1],
            RiskSpec::total_variation(5.0),
            1e-3,
        );
    }

    #[test]
    fn product_sets_add_up() {
        let a = MixedStrategy::new(vec![0.3, 0.7]).unwrap();
        let b = MixedStrategy::new(vec![0.2, 0.3, 0.5]).unwrap();
        let (xa, xb) = (vec![0.4, -0.1], vec![0.0, 0.2, -0.3]);
        let spec = RiskSpec::kl(0.5);
        let sum =
            dual_risk(&xa, &a, &spec).unwrap().value + dual_risk(&xb, &b, &spec).unwrap().value;
        let reference = ProductStrategy::new(vec![a, b]).unwrap();
        let obj = PenalizedLinear::new([xa, xb].concat(), &reference, spec).unwrap();
        let r = inner_max_oracle(&obj, &[2, 3], &OracleConfig::default()).unwrap();
        assert!((r.value - sum).abs() <= 1e-6);
    }

    #[test]
    fn rejects_empty_blocks() {
        let reference = ProductStrategy::new(vec![MixedStrategy::uniform(2)]).unwrap();
        let obj = PenalizedLinear::new(vec![0.0, 1.0], &reference, RiskSpec::kl(1.0)).unwrap();
        assert!(inner_max_oracle(&obj, &[2, 0], &OracleConfig::default()).is_err());
    }
}
