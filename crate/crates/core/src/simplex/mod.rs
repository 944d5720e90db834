//! Probability simplices, Euclidean projection, divergences and regularizers.
//!
//! Everything in this module works on plain `f64` slices internally; the
//! [`MixedStrategy`] and [`ProductStrategy`] wrappers validate their contents on
//! construction so downstream code can assume well-formed distributions.

mod divergence;
mod minimize;
mod prox;
mod regularizer;

pub use divergence::{
    kl, kl_grad_p, kl_grad_q, product_divergence, reverse_kl, reverse_kl_grad_p, total_variation,
    Divergence,
};
pub use minimize::{minimize_on_simplex, Minimum, SimplexMinimizer};
pub use prox::{prox_l1_centered, prox_log_barrier, prox_neg_entropy};
pub use regularizer::{
    log_barrier, log_barrier_grad, logit_response, neg_entropy, neg_entropy_grad, Regularizer,
};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};

/// Allowed deviation of a strategy's total mass from one.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Floor applied to iterates that must stay in the simplex interior.
pub const INTERIOR_FLOOR: f64 = 1e-12;

/// A probability vector over a finite action set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixedStrategy(Vec<f64>);

impl MixedStrategy {
    /// Validates `probs`: nonempty, finite, nonnegative, summing to one within
    /// [`SUM_TOLERANCE`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return invalid("a mixed strategy needs at least one action");
        }
        if let Some((k, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return invalid(format!(
                "probability {k} is {p}, expected a finite value >= 0"
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return invalid(format!("probabilities sum to {total}, expected 1"));
        }
        Ok(Self(probs))
    }

    /// Uniform distribution over `n` actions.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform strategy over zero actions");
        Self(vec![1.0 / n as f64; n])
    }

    /// Point mass on action `k` of `n`.
    pub fn vertex(n: usize, k: usize) -> Self {
        assert!(k < n, "vertex {k} out of range for {n} actions");
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        Self(v)
    }

    pub(crate) fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Expectation of `values` under this distribution.
    pub fn expect(&self, values: &[f64]) -> f64 {
        dot(&self.0, values)
    }

    /// Moves every entry to at least `floor` and renormalizes.
    pub fn floored(&self, floor: f64) -> Self {
        Self(floor_and_renormalize(&self.0, floor))
    }

    /// Largest absolute componentwise difference.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for MixedStrategy {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MixedStrategy> for Vec<f64> {
    fn from(s: MixedStrategy) -> Self {
        s.0
    }
}

impl AsRef<[f64]> for MixedStrategy {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A tuple of independent mixed strategies, one per factor simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductStrategy {
    parts: Vec<MixedStrategy>,
}

impl ProductStrategy {
    pub fn new(parts: Vec<MixedStrategy>) -> Result<Self> {
        if parts.is_empty() {
            return invalid("a product strategy needs at least one factor");
        }
        Ok(Self { parts })
    }

    pub fn uniform(sizes: &[usize]) -> Self {
        Self {
            parts: sizes.iter().map(|&n| MixedStrategy::uniform(n)).collect(),
        }
    }

    /// Splits `flat` according to `sizes` and validates each block.
    pub fn from_flat(sizes: &[usize], flat: &[f64]) -> Result<Self> {
        check_len("product strategy", sizes.iter().sum(), flat.len())?;
        let mut parts = Vec::with_capacity(sizes.len());
        let mut offset = 0;
        for &n in sizes {
            parts.push(MixedStrategy::new(flat[offset..offset + n].to_vec())?);
            offset += n;
        }
        Self::new(parts)
    }

    pub fn parts(&self) -> &[MixedStrategy] {
        &self.parts
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.parts.iter().map(MixedStrategy::len).collect()
    }

    /// Concatenation of all factors.
    pub fn flat(&self) -> Vec<f64> {
        self.parts
            .iter()
            .flat_map(|p| p.probs().iter().copied())
            .collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Result<MixedStrategy> {
    if v.is_empty() {
        return invalid("cannot project an empty vector");
    }
    if v.iter().any(|x| !x.is_finite()) {
        return invalid("cannot project a vector with non-finite entries");
    }
    let mut out = v.to_vec();
    project_scaled_in_place(&mut out, 1.0);
    Ok(MixedStrategy(out))
}

/// Projects onto `{x : x >= floor, sum x = 1}` in place.
pub(crate) fn project_floored_in_place(v: &mut [f64], floor: f64) {
    let n = v.len() as f64;
    let floor = floor.min(1.0 / n);
    let radius = 1.0 - n * floor;
    for x in v.iter_mut() {
        *x -= floor;
    }
    project_scaled_in_place(v, radius);
    for x in v.iter_mut() {
        *x += floor;
    }
}

/// Projects onto `{x >= 0, sum x = radius}` in place.
pub(crate) fn project_scaled_in_place(v: &mut [f64], radius: f64) {
    if v.len() == 1 {
        v[0] = radius;
        return;
    }
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - radius) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

pub(crate) fn floor_and_renormalize(p: &[f64], floor: f64) -> Vec<f64> {
    let mut out: Vec<f64> = p.iter().map(|x| x.max(floor)).collect();
    let total: f64 = out.iter().sum();
    for x in &mut out {
        *x /= total;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn projection_of_a_point_above_the_simplex() {
        let p = project_simplex(&[0.5, 0.5, 0.5]).unwrap();
        for x in p.probs() {
            assert_abs_diff_eq!(*x, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn projection_clips_dominated_coordinates() {
        let p = project_simplex(&[2.0, 0.0, -1.0]).unwrap();
        assert_eq!(p.probs(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn floored_projection_respects_floor() {
        let mut v = vec![5.0, -3.0, 0.2];
        project_floored_in_place(&mut v, 1e-3);
        assert!(v.iter().all(|x| *x >= 1e-3 - 1e-15));
        assert_abs_diff_eq!(v.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_distributions() {
        assert!(MixedStrategy::new(vec![]).is_err());
        assert!(MixedStrategy::new(vec![0.7, 0.7]).is_err());
        assert!(MixedStrategy::new(vec![1.5, -0.5]).is_err());
        assert!(MixedStrategy::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn product_strategy_flat_round_trip() {
        let p = ProductStrategy::from_flat(&[2, 3], &[0.5, 0.5, 0.2, 0.3, 0.5]).unwrap();
        assert_eq!(p.sizes(), vec![2, 3]);
        assert_eq!(p.flat(), vec![0.5, 0.5, 0.2, 0.3, 0.5]);
    }
}
