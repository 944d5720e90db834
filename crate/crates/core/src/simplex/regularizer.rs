use serde::{Deserialize, Serialize};

use super::MixedStrategy;
use crate::error::{invalid, Result};

/// Strictly convex regularizers modelling bounded rationality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    /// `sum pi log pi`
    NegEntropy,
    /// `-sum log pi`
    LogBarrier,
}

impl Regularizer {
    pub fn value(self, pi: &[f64]) -> f64 {
        match self {
            Regularizer::NegEntropy => pi.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum(),
            Regularizer::LogBarrier => {
                if pi.iter().any(|&x| x <= 0.0) {
                    f64::INFINITY
                } else {
                    -pi.iter().map(|x| x.ln()).sum::<f64>()
                }
            }
        }
    }

    pub fn gradient(self, pi: &[f64], out: &mut [f64]) {
        match self {
            Regularizer::NegEntropy => {
                for (o, &x) in out.iter_mut().zip(pi) {
                    *o = x.ln() + 1.0;
                }
            }
            Regularizer::LogBarrier => {
                for (o, &x) in out.iter_mut().zip(pi) {
                    *o = -1.0 / x;
                }
            }
        }
    }

    /// Diagonal of the Hessian.
    pub fn curvature(self, x: f64) -> f64 {
        match self {
            Regularizer::NegEntropy => 1.0 / x,
            Regularizer::LogBarrier => 1.0 / (x * x),
        }
    }
}

/// `sum pi log pi`.
pub fn neg_entropy(pi: &MixedStrategy) -> f64 {
    Regularizer::NegEntropy.value(pi.probs())
}

/// `log pi + 1`, componentwise.
pub fn neg_entropy_grad(pi: &MixedStrategy) -> Vec<f64> {
    let mut out = vec![0.0; pi.len()];
    Regularizer::NegEntropy.gradient(pi.probs(), &mut out);
    out
}

/// `-sum log pi`; `+inf` on the boundary.
pub fn log_barrier(pi: &MixedStrategy) -> f64 {
    Regularizer::LogBarrier.value(pi.probs())
}

/// `-1/pi`, componentwise.
pub fn log_barrier_grad(pi: &MixedStrategy) -> Vec<f64> {
    let mut out = vec![0.0; pi.len()];
    Regularizer::LogBarrier.gradient(pi.probs(), &mut out);
    out
}

/// Logit choice: component `k` proportional to `exp(-x_k / epsilon)`.
pub fn logit_response(x: &[f64], epsilon: f64) -> Result<MixedStrategy> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return invalid(format!("logit temperature must be positive, got {epsilon}"));
    }
    if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
        return invalid("logit response needs a nonempty finite loss vector");
    }
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = x.iter().map(|v| (-(v - min) / epsilon).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    Ok(MixedStrategy::from_vec_unchecked(w))
}
