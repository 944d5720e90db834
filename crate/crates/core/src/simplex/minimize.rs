use super::dot;

/// Settings for [`minimize_on_simplex`].
#[derive(Clone, Debug)]
pub struct SimplexMinimizer {
    pub max_iters: usize,
    /// Target for the certified suboptimality bound.
    pub tolerance: f64,
}

impl Default for SimplexMinimizer {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            tolerance: 1e-10,
        }
    }
}

/// Result of a simplex minimization.
#[derive(Clone, Debug)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    /// Upper bound on `value - min f` derived from convexity.
    pub certificate: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes a convex function over the simplex with entropic mirror descent.
///
/// `f(x, grad)` returns the value at `x` and writes a (sub)gradient into
/// `grad`. Step sizes are found by backtracking on the Bregman upper model,
/// and the certificate combines the pointwise Frank-Wolfe bound with the
/// averaged linearization bound, so it stays valid for nonsmooth objectives.
pub fn minimize_on_simplex<F>(mut f: F, x0: &[f64], cfg: &SimplexMinimizer) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x: Vec<f64> = x0
        .iter()
        .map(|v| (1.0 - 1e-12) * v + 1e-12 / n as f64)
        .collect();
    let mut g = vec![0.0; n];
    let mut value = f(&x, &mut g);
    if n == 1 {
        return Minimum {
            point: x,
            value,
            certificate: 0.0,
            iterations: 0,
            converged: true,
        };
    }

    let mut best = (value, x.clone());
    let mut lower = f64::NEG_INFINITY;
    let mut lin_const = 0.0;
    let mut lin_grad = vec![0.0; n];
    let mut count = 0.0;

    let spread = |g: &[f64]| {
        let (lo, hi) = g
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        (hi - lo).max(1e-300)
    };
    let mut eta = 1.0 / spread(&g);
    let mut y = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut certificate = f64::INFINITY;

    for t in 0..cfg.max_iters {
        let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
        let gx = dot(&g, &x);
        lower = lower.max(value + gmin - gx);
        lin_const += value - gx;
        for (a, b) in lin_grad.iter_mut().zip(&g) {
            *a += b;
        }
        count += 1.0;
        let avg_lower =
            (lin_const + lin_grad.iter().copied().fold(f64::INFINITY, f64::min)) / count;
        certificate = best.0 - lower.max(avg_lower);
        if certificate <= cfg.tolerance {
            return Minimum {
                point: best.1,
                value: best.0,
                certificate: certificate.max(0.0),
                iterations: t,
                converged: true,
            };
        }

        let mut accepted = false;
        for attempt in 0..60 {
            let mut total = 0.0;
            for k in 0..n {
                y[k] = x[k] * (-eta * (g[k] - gmin)).exp();
                total += y[k];
            }
            for v in &mut y {
                *v /= total;
            }
            if y.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
                eta *= 0.5;
                continue;
            }
            let vy = f(&y, &mut gy);
            // relative smoothness in gradient form: robust to rounding in f
            let mut curvature = 0.0;
            let mut bregman = 0.0;
            for k in 0..n {
                let d = y[k] - x[k];
                curvature += (gy[k] - g[k]) * d;
                bregman += d * (y[k] / x[k]).ln();
            }
            if vy.is_finite() && (curvature <= bregman / eta || attempt == 59) {
                accepted = true;
                std::mem::swap(&mut x, &mut y);
                std::mem::swap(&mut g, &mut gy);
                value = vy;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
        if value < best.0 {
            best = (value, x.clone());
        }
        eta = (eta * 2.0).min(1e12 / spread(&g));
    }
    Minimum {
        point: best.1,
        value: best.0,
        certificate: certificate.max(0.0),
        iterations: cfg.max_iters,
        converged: certificate <= cfg.tolerance,
    }
}
