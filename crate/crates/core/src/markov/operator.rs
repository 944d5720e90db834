//! Environment and policy risk operators of one step.

use super::TransitionRow;
use crate::error::{check_len, invalid, Result};
use crate::matrix::{regularized_loss, risk_loss, MatrixGameSpec};
use crate::risk::{dual_risk_raw, RiskSpec};
use crate::simplex::MixedStrategy;

/// `inf_P' R + P'.W + D(P', P)`: the reward plus the continuation utility `W`
/// under the least favourable transition law.
pub fn env_risk_operator(r: f64, p: &MixedStrategy, w: &[f64], spec: &RiskSpec) -> Result<f64> {
    check_len("continuation values", p.len(), w.len())?;
    spec.validate()?;
    if !r.is_finite() || w.iter().any(|v| !v.is_finite()) {
        return invalid("environment operator needs finite inputs");
    }
    Ok(r - dual_risk_raw(w, p.probs(), spec, None))
}

/// Scratch space reused across cells by [`env_value`].
#[derive(Default)]
pub(crate) struct EnvScratch {
    x: Vec<f64>,
    p: Vec<f64>,
}

/// Sparse form of [`env_risk_operator`]. `w_min` is the smallest entry of
/// `w`, which total variation may move mass to even off the support.
pub(crate) fn env_value(
    r: f64,
    row: &TransitionRow,
    w: &[f64],
    w_min: f64,
    spec: &RiskSpec,
    buf: &mut EnvScratch,
) -> f64 {
    match spec {
        RiskSpec::ReverseKl { .. } => {
            let dense = row.to_dense(w.len());
            r - dual_risk_raw(w, &dense, spec, None)
        }
        _ => {
            buf.x.clear();
            buf.p.clear();
            for (&s, &p) in row.next.iter().zip(&row.prob) {
                buf.x.push(w[s]);
                buf.p.push(p);
            }
            if matches!(spec, RiskSpec::TotalVariation { .. }) {
                buf.x.push(w_min);
                buf.p.push(0.0);
            }
            r - dual_risk_raw(&buf.x, &buf.p, spec, None)
        }
    }
}

/// Player `i`'s risk loss in the stage game whose payoffs are the `Q`
/// tables, optionally plus `epsilon_i * nu_i(pi_i)`.
pub fn policy_risk_operator(
    stage: &MatrixGameSpec,
    i: usize,
    profile: &[MixedStrategy],
    regularized: bool,
) -> Result<f64> {
    if regularized {
        regularized_loss(stage, i, profile)
    } else {
        risk_loss(stage, i, profile)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{aggregate_risk_loss, RationalitySpec};

    fn specs() -> [RiskSpec; 3] {
        [
            RiskSpec::kl(0.7),
            RiskSpec::reverse_kl(1.3),
            RiskSpec::total_variation(0.3),
        ]
    }

    #[test]
    fn constant_continuation_passes_through() {
        let p = MixedStrategy::new(vec![0.2, 0.5, 0.3]).unwrap();
        for spec in specs() {
            let v = env_risk_operator(1.5, &p, &[2.0; 3], &spec).unwrap();
            assert!((v - 3.5).abs() < 1e-12, "{spec:?} {v}");
        }
    }

    #[test]
    fn sparse_and_dense_agree() {
        let w = [0.4, -1.2, 0.9, 2.5, 0.1];
        let dense = [0.0, 0.0, 0.6, 0.4, 0.0];
        let row = TransitionRow::from_dense(&dense);
        let p = MixedStrategy::new(dense.to_vec()).unwrap();
        let mut buf = EnvScratch::default();
        for spec in specs() {
            let a = env_risk_operator(0.3, &p, &w, &spec).unwrap();
            let b = env_value(0.3, &row, &w, -1.2, &spec, &mut buf);
            assert!((a - b).abs() < 1e-12, "{spec:?} {a} {b}");
        }
    }

    #[test]
    fn tv_with_zero_weight_takes_the_global_minimum() {
        let p = MixedStrategy::new(vec![0.5, 0.5, 0.0]).unwrap();
        let v =
            env_risk_operator(1.0, &p, &[3.0, 2.0, -4.0], &RiskSpec::total_variation(0.0)).unwrap();
        assert!((v + 3.0).abs() < 1e-12);
    }

    #[test]
    fn policy_operator_is_the_aggregate_loss() {
        let q1 = vec![vec![0.3, -0.2], vec![1.0, 0.4]];
        let q2 = vec![vec![0.1, 0.0], vec![-0.5, 0.8]];
        let g = MatrixGameSpec::two_player(
            &q1,
            &q2,
            [RiskSpec::kl(1.0), RiskSpec::kl(2.0)],
            [RationalitySpec::log_barrier(1.0); 2],
        )
        .unwrap();
        let prof = vec![
            MixedStrategy::new(vec![0.3, 0.7]).unwrap(),
            MixedStrategy::new(vec![0.6, 0.4]).unwrap(),
        ];
        for i in 0..2 {
            let a = policy_risk_operator(&g, i, &prof, false).unwrap();
            let b = aggregate_risk_loss(&g, i, &prof).unwrap();
            assert_eq!(a, b);
        }
    }
}
