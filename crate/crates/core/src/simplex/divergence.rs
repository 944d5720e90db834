use serde::{Deserialize, Serialize};

use super::{MixedStrategy, ProductStrategy};
use crate::error::{check_len, Result};

/// Divergences between two distributions on the same simplex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    /// `sum p log(p/q)`
    Kl,
    /// `sum q log(q/p)`
    ReverseKl,
    /// `sum |p - q|`
    TotalVariation,
}

impl Divergence {
    /// Divergence of `p` from the reference `q`. Returns `+inf` when the
    /// support condition fails.
    pub fn value(self, p: &[f64], q: &[f64]) -> f64 {
        match self {
            Divergence::Kl => kl_raw(p, q),
            Divergence::ReverseKl => kl_raw(q, p),
            Divergence::TotalVariation => p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum(),
        }
    }

    /// Gradient (or a subgradient for TV) with respect to the first argument.
    pub fn grad_first(self, p: &[f64], q: &[f64], out: &mut [f64]) {
        match self {
            Divergence::Kl => {
                for ((o, &a), &b) in out.iter_mut().zip(p).zip(q) {
                    *o = (a / b).ln() + 1.0;
                }
            }
            Divergence::ReverseKl => {
                for ((o, &a), &b) in out.iter_mut().zip(p).zip(q) {
                    *o = -b / a;
                }
            }
            Divergence::TotalVariation => {
                for ((o, &a), &b) in out.iter_mut().zip(p).zip(q) {
                    *o = sign(a - b);
                }
            }
        }
    }

    /// Gradient (or a subgradient for TV) with respect to the reference.
    pub fn grad_second(self, p: &[f64], q: &[f64], out: &mut [f64]) {
        match self {
            Divergence::Kl => {
                for ((o, &a), &b) in out.iter_mut().zip(p).zip(q) {
                    *o = -a / b;
                }
            }
            Divergence::ReverseKl => {
                for ((o, &a), &b) in out.iter_mut().zip(p).zip(q) {
                    *o = (b / a).ln() + 1.0;
                }
            }
            Divergence::TotalVariation => {
                for ((o, &a), &b) in out.iter_mut().zip(p).zip(q) {
                    *o = sign(b - a);
                }
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            total += a * (a / b).ln();
        }
    }
    total
}

/// `KL(p, q) = sum p log(p/q)`, `+inf` if `p` puts mass where `q` has none.
pub fn kl(p: &MixedStrategy, q: &MixedStrategy) -> Result<f64> {
    check_len("kl", q.len(), p.len())?;
    Ok(kl_raw(p.probs(), q.probs()))
}

/// `KL(q, p) = sum q log(q/p)`.
pub fn reverse_kl(p: &MixedStrategy, q: &MixedStrategy) -> Result<f64> {
    check_len("reverse_kl", q.len(), p.len())?;
    Ok(kl_raw(q.probs(), p.probs()))
}

/// `sum |p - q|`.
pub fn total_variation(p: &MixedStrategy, q: &MixedStrategy) -> Result<f64> {
    check_len("total_variation", q.len(), p.len())?;
    Ok(Divergence::TotalVariation.value(p.probs(), q.probs()))
}

/// Gradient of `KL(p, q)` in `p`: `log(p/q) + 1`.
pub fn kl_grad_p(p: &MixedStrategy, q: &MixedStrategy) -> Result<Vec<f64>> {
    check_len("kl_grad_p", q.len(), p.len())?;
    let mut out = vec![0.0; p.len()];
    Divergence::Kl.grad_first(p.probs(), q.probs(), &mut out);
    Ok(out)
}

/// Gradient of `KL(p, q)` in `q`: `-p/q`.
pub fn kl_grad_q(p: &MixedStrategy, q: &MixedStrategy) -> Result<Vec<f64>> {
    check_len("kl_grad_q", q.len(), p.len())?;
    let mut out = vec![0.0; p.len()];
    Divergence::Kl.grad_second(p.probs(), q.probs(), &mut out);
    Ok(out)
}

/// Gradient of `KL(q, p)` in `p`: `-q/p`.
pub fn reverse_kl_grad_p(p: &MixedStrategy, q: &MixedStrategy) -> Result<Vec<f64>> {
    check_len("reverse_kl_grad_p", q.len(), p.len())?;
    let mut out = vec![0.0; p.len()];
    Divergence::ReverseKl.grad_first(p.probs(), q.probs(), &mut out);
    Ok(out)
}

/// Sum of a single-simplex divergence over the factors of two product
/// strategies.
pub fn product_divergence<F>(d: F, p: &ProductStrategy, q: &ProductStrategy) -> Result<f64>
where
    F: Fn(&MixedStrategy, &MixedStrategy) -> Result<f64>,
{
    check_len("product_divergence", q.parts().len(), p.parts().len())?;
    let mut total = 0.0;
    for (a, b) in p.parts().iter().zip(q.parts()) {
        total += d(a, b)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ms(v: &[f64]) -> MixedStrategy {
        MixedStrategy::new(v.to_vec()).unwrap()
    }

    #[test]
    fn kl_half_vs_quarter() {
        // 0.5 ln 2 + 0.5 ln(2/3)
        let v = kl(&ms(&[0.5, 0.5]), &ms(&[0.25, 0.75])).unwrap();
        assert_abs_diff_eq!(v, 0.143_841_036_225_890_3, epsilon = 1e-15);
    }

    #[test]
    fn kl_support_violation_is_infinite() {
        assert_eq!(
            kl(&ms(&[0.5, 0.5]), &ms(&[1.0, 0.0])).unwrap(),
            f64::INFINITY
        );
        assert_eq!(
            reverse_kl(&ms(&[1.0, 0.0]), &ms(&[0.5, 0.5])).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(kl(&ms(&[1.0]), &ms(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn product_divergence_sums_factors() {
        let p = ProductStrategy::new(vec![ms(&[0.5, 0.5]), ms(&[0.2, 0.8])]).unwrap();
        let q = ProductStrategy::new(vec![ms(&[0.25, 0.75]), ms(&[0.5, 0.5])]).unwrap();
        let expected =
            kl(&p.parts()[0], &q.parts()[0]).unwrap() + kl(&p.parts()[1], &q.parts()[1]).unwrap();
        assert_abs_diff_eq!(
            product_divergence(kl, &p, &q).unwrap(),
            expected,
            epsilon = 1e-15
        );
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = [0.3, 0.5, 0.2];
        let q = [0.2, 0.2, 0.6];
        let h = 1e-7;
        for d in [Divergence::Kl, Divergence::ReverseKl] {
            let mut g1 = [0.0; 3];
            let mut g2 = [0.0; 3];
            d.grad_first(&p, &q, &mut g1);
            d.grad_second(&p, &q, &mut g2);
            for k in 0..3 {
                let mut pp = p;
                pp[k] += h;
                let mut pm = p;
                pm[k] -= h;
                let fd = (d.value(&pp, &q) - d.value(&pm, &q)) / (2.0 * h);
                assert_abs_diff_eq!(g1[k], fd, epsilon = 1e-6);
                let mut qp = q;
                qp[k] += h;
                let mut qm = q;
                qm[k] -= h;
                let fd = (d.value(&p, &qp) - d.value(&p, &qm)) / (2.0 * h);
                assert_abs_diff_eq!(g2[k], fd, epsilon = 1e-6);
            }
        }
    }
}
