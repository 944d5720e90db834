//! Convex risk measures in dual (penalized worst-case expectation) form.
//!
//! For an outcome vector `x` and reference distribution `pi`,
//! `rho(x) = sup_p E_p[-x] - D(p, pi)`. The three built-in penalties have exact
//! solutions; [`inner_max_oracle`] handles arbitrary concave objectives over
//! products of simplices.

mod oracle;

pub use oracle::{inner_max_oracle, ConcaveObjective, OracleConfig, PenalizedLinear};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};
use crate::simplex::{Divergence, MixedStrategy, ProductStrategy};

/// Penalty function of a dual risk measure.
///
/// KL and reverse KL are scaled by `1/tau`; total variation is
/// `lambda * ||p - q||_1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RiskSpec {
    Kl { tau: f64 },
    ReverseKl { tau: f64 },
    TotalVariation { lambda: f64 },
}

impl RiskSpec {
    pub fn kl(tau: f64) -> Self {
        RiskSpec::Kl { tau }
    }

    pub fn reverse_kl(tau: f64) -> Self {
        RiskSpec::ReverseKl { tau }
    }

    pub fn total_variation(lambda: f64) -> Self {
        RiskSpec::TotalVariation { lambda }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RiskSpec::Kl { tau } | RiskSpec::ReverseKl { tau } => {
                if !(tau > 0.0 && tau.is_finite()) {
                    return invalid(format!(
                        "risk aversion tau must be positive and finite, got {tau}"
                    ));
                }
            }
            RiskSpec::TotalVariation { lambda } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return invalid(format!("total variation weight must be >= 0, got {lambda}"));
                }
            }
        }
        Ok(())
    }

    pub fn divergence(&self) -> Divergence {
        match self {
            RiskSpec::Kl { .. } => Divergence::Kl,
            RiskSpec::ReverseKl { .. } => Divergence::ReverseKl,
            RiskSpec::TotalVariation { .. } => Divergence::TotalVariation,
        }
    }

    /// Multiplier in front of the divergence.
    pub fn weight(&self) -> f64 {
        match *self {
            RiskSpec::Kl { tau } | RiskSpec::ReverseKl { tau } => 1.0 / tau,
            RiskSpec::TotalVariation { lambda } => lambda,
        }
    }

    /// `weight * D(p, q)`.
    pub fn penalty(&self, p: &[f64], q: &[f64]) -> f64 {
        let w = self.weight();
        if w == 0.0 {
            return 0.0;
        }
        w * self.divergence().value(p, q)
    }

    /// Gradient of the penalty in its first argument.
    pub fn penalty_grad(&self, p: &[f64], q: &[f64], out: &mut [f64]) {
        self.divergence().grad_first(p, q, out);
        let w = self.weight();
        for v in out.iter_mut() {
            *v *= w;
        }
    }

    /// Lipschitz constant of the penalty in the reference argument under the
    /// l1 norm, when one exists on the whole simplex.
    pub fn lipschitz_l1(&self) -> Option<f64> {
        match *self {
            RiskSpec::TotalVariation { lambda } => Some(lambda),
            _ => None,
        }
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(self, RiskSpec::TotalVariation { .. })
    }

    pub fn label(&self) -> String {
        match *self {
            RiskSpec::Kl { tau } => format!("kl(tau={tau})"),
            RiskSpec::ReverseKl { tau } => format!("reverse_kl(tau={tau})"),
            RiskSpec::TotalVariation { lambda } => format!("tv(lambda={lambda})"),
        }
    }
}

/// Value of a dual risk problem together with its maximizing distribution.
#[derive(Clone, Debug)]
pub struct RiskEvaluation {
    pub value: f64,
    pub maximizer: ProductStrategy,
    /// True when the value comes from a closed-form or exact 1-D solve.
    pub exact: bool,
    /// Certified upper bound on the distance to the true supremum.
    pub gap_bound: f64,
}

/// `sup_p E_p[-x] - D(p, pi)` for a single simplex.
pub fn dual_risk(x: &[f64], pi: &MixedStrategy, spec: &RiskSpec) -> Result<RiskEvaluation> {
    check_len("dual_risk", pi.len(), x.len())?;
    spec.validate()?;
    if x.iter().any(|v| !v.is_finite()) {
        return invalid("dual_risk needs finite outcomes");
    }
    let mut p = vec![0.0; x.len()];
    let value = dual_risk_raw(x, pi.probs(), spec, Some(&mut p));
    let total: f64 = p.iter().sum();
    for v in &mut p {
        *v /= total;
    }
    Ok(RiskEvaluation {
        value,
        maximizer: ProductStrategy::new(vec![MixedStrategy::from_vec_unchecked(p)])?,
        exact: true,
        gap_bound: 0.0,
    })
}

/// Entropic risk `(1/tau) log sum pi exp(-tau x)`.
pub fn entropic_risk(x: &[f64], pi: &MixedStrategy, tau: f64) -> Result<f64> {
    check_len("entropic_risk", pi.len(), x.len())?;
    RiskSpec::kl(tau).validate()?;
    Ok(kl_dual(x, pi.probs(), tau, None))
}

pub(crate) fn dual_risk_raw(
    x: &[f64],
    pi: &[f64],
    spec: &RiskSpec,
    argmax: Option<&mut [f64]>,
) -> f64 {
    match *spec {
        RiskSpec::Kl { tau } => kl_dual(x, pi, tau, argmax),
        RiskSpec::ReverseKl { tau } => reverse_kl_dual(x, pi, tau, argmax),
        RiskSpec::TotalVariation { lambda } => tv_dual(x, pi, lambda, argmax),
    }
}

fn kl_dual(x: &[f64], pi: &[f64], tau: f64, argmax: Option<&mut [f64]>) -> f64 {
    let m = x
        .iter()
        .zip(pi)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&v, _)| v)
        .fold(f64::INFINITY, f64::min);
    // log sum pi e^{-tau d} = log(1 + sum pi expm1(-tau d)) keeps small tau accurate
    let mut s = 0.0;
    let mut mass = 0.0;
    for (&v, &p) in x.iter().zip(pi) {
        if p > 0.0 {
            s += p * (-tau * (v - m)).exp_m1();
            mass += p;
        }
    }
    let log_z = (mass - 1.0 + s).ln_1p();
    if let Some(out) = argmax {
        let z = log_z.exp();
        for ((o, &v), &p) in out.iter_mut().zip(x).zip(pi) {
            *o = if p > 0.0 {
                p * (-tau * (v - m)).exp() / z
            } else {
                0.0
            };
        }
    }
    -m + log_z / tau
}

fn reverse_kl_dual(x: &[f64], pi: &[f64], tau: f64, argmax: Option<&mut [f64]>) -> f64 {
    // Stationarity gives p_k = pi_k / (tau (mu + x_k)); write c = mu + m with
    // m the smallest outcome on the support and solve sum p_k = 1 for c.
    let mut m = f64::INFINITY;
    let mut k_star = 0;
    for (k, (&v, &p)) in x.iter().zip(pi).enumerate() {
        if p > 0.0 && v < m {
            m = v;
            k_star = k;
        }
    }
    let g = |c: f64| -> (f64, f64) {
        let mut val = -1.0;
        let mut der = 0.0;
        for (&v, &p) in x.iter().zip(pi) {
            if p > 0.0 {
                let u = tau * (c + v - m);
                val += p / u;
                der -= p * tau / (u * u);
            }
        }
        (val, der)
    };
    let hi = 1.0 / tau;
    // g is convex and decreasing, so Newton from the left never overshoots
    let mut c = pi[k_star] / tau;
    for _ in 0..200 {
        let (val, der) = g(c);
        if val <= 0.0 {
            break;
        }
        let next = (c - val / der).min(hi);
        if (next - c).abs() <= 1e-17 * c.abs() {
            c = next;
            break;
        }
        c = next;
    }

    // Mass on outcomes outside the reference support is free of penalty; if
    // one of them beats the multiplier it absorbs the remaining mass.
    let mut off_min = f64::INFINITY;
    let mut off_k = usize::MAX;
    for (k, (&v, &p)) in x.iter().zip(pi).enumerate() {
        if p <= 0.0 && v < off_min {
            off_min = v;
            off_k = k;
        }
    }
    let mu = c - m;
    let mut p_opt = vec![0.0; x.len()];
    if off_k != usize::MAX && -off_min > mu {
        let mu = -off_min;
        let mut used = 0.0;
        for (k, (&v, &p)) in x.iter().zip(pi).enumerate() {
            if p > 0.0 {
                p_opt[k] = p / (tau * (mu + v));
                used += p_opt[k];
            }
        }
        p_opt[off_k] = (1.0 - used).max(0.0);
    } else {
        for (k, (&v, &p)) in x.iter().zip(pi).enumerate() {
            if p > 0.0 {
                p_opt[k] = p / (tau * (c + v - m));
            }
        }
        let total: f64 = p_opt.iter().sum();
        for v in &mut p_opt {
            *v /= total;
        }
    }
    let mut value = 0.0;
    for (k, (&v, &p)) in x.iter().zip(pi).enumerate() {
        value -= p_opt[k] * v;
        if p > 0.0 {
            value -= p * (p / p_opt[k]).ln() / tau;
        }
    }
    if let Some(out) = argmax {
        out.copy_from_slice(&p_opt);
    }
    value
}

fn tv_dual(x: &[f64], pi: &[f64], lambda: f64, argmax: Option<&mut [f64]>) -> f64 {
    // Moving a unit of mass from k to the cheapest outcome gains x_k - m and
    // costs 2 lambda under the l1 penalty.
    let mut m = f64::INFINITY;
    let mut k_min = 0;
    for (k, &v) in x.iter().enumerate() {
        if v < m {
            m = v;
            k_min = k;
        }
    }
    let cap = m + 2.0 * lambda;
    let value = -x.iter().zip(pi).map(|(&v, &p)| p * v.min(cap)).sum::<f64>();
    if let Some(out) = argmax {
        out.copy_from_slice(pi);
        let mut moved = 0.0;
        for (k, &v) in x.iter().enumerate() {
            if v > cap {
                moved += out[k];
                out[k] = 0.0;
            }
        }
        out[k_min] += moved;
    }
    value
}
