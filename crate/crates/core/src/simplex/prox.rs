//! Exact proximal maps of separable convex terms restricted to the simplex.
//!
//! Each map computes `argmin_{x in simplex} phi(x) + ||x - y||^2 / 2` by
//! solving the optimality condition coordinatewise for a given multiplier
//! `mu` and then finding the `mu` at which the coordinates sum to one with a
//! bracketed Newton iteration (the sum is nonincreasing in `mu`).

/// Solves `w + ln w = a` for `w > 0`.
fn wexp(a: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return 0.0;
    }
    // both starting points satisfy f(w) <= 0, and f is concave increasing, so
    // Newton steps stay on the left of the root
    let mut w = if a > 1.0 {
        a - a.ln()
    } else {
        let t = a.exp();
        t / (1.0 + t)
    };
    for _ in 0..100 {
        let f = w + w.ln() - a;
        let next = w - f * w / (w + 1.0);
        if !(next > w) || (next - w) <= 4.0 * f64::EPSILON * next {
            return next.max(w);
        }
        w = next;
    }
    w
}

/// Finds the multiplier at which the coordinates sum to one. `mu0`, when
/// given, is a starting point believed to be close to the root.
fn solve_mu(
    y: &[f64],
    out: &mut [f64],
    mu0: Option<f64>,
    mut coord: impl FnMut(usize, f64) -> (f64, f64),
) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut mu = match mu0 {
        Some(m) if m.is_finite() => m,
        _ => {
            let m = left_start(&mut coord, y);
            lo = m;
            m
        }
    };
    for _ in 0..300 {
        let mut g = -1.0;
        let mut dg = 0.0;
        for (k, o) in out.iter_mut().enumerate() {
            let (x, dx) = coord(k, mu);
            *o = x;
            g += x;
            dg += dx;
        }
        if g.abs() <= 1e-15 {
            break;
        }
        if g > 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        if hi - lo <= 1e-16 * (1.0 + mu.abs()) {
            break;
        }
        let newton = if dg > 0.0 { mu + g / dg } else { f64::NAN };
        mu = if newton > lo && newton < hi {
            newton
        } else if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if lo.is_finite() {
            lo + 1.0 + lo.abs()
        } else {
            left_start(&mut coord, y)
        };
    }
    let total: f64 = out.iter().sum();
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// A multiplier at which the largest coordinate is at least one, so the sum
/// exceeds one.
fn left_start(coord: &mut impl FnMut(usize, f64) -> (f64, f64), y: &[f64]) -> f64 {
    let (k, y_max) = y
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (k, v)| if v > acc.1 { (k, v) } else { acc },
        );
    let mut shift = 0.0;
    while coord(k, y_max - 1.0 - shift).0 < 1.0 && shift < 1e300 {
        shift = if shift == 0.0 { 1.0 } else { 2.0 * shift };
    }
    y_max - 1.0 - shift
}

/// Average of the multipliers that make each coordinate of `guess` optimal.
fn mu_estimate(
    guess: Option<&[f64]>,
    y: &[f64],
    residual: impl Fn(usize, f64) -> f64,
) -> Option<f64> {
    let g = guess?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (k, &x) in g.iter().enumerate() {
        if x > 0.0 && y[k].is_finite() {
            total += residual(k, x);
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

/// Proximal map of `sum_k c_k (-ln x_k)` with `c_k = c * w_k` (or `c`
/// without weights). Coordinates with zero weight reduce to projection.
///
/// `guess`, typically the previous iterate, only speeds up the solve.
pub fn prox_log_barrier(
    y: &[f64],
    c: f64,
    weights: Option<&[f64]>,
    guess: Option<&[f64]>,
    out: &mut [f64],
) {
    let ck = |k: usize| c * weights.map_or(1.0, |w| w[k]);
    // stationarity: x - y + mu - c / x = 0
    let mu0 = mu_estimate(guess, y, |k, x| y[k] - x + ck(k) / x);
    solve_mu(y, out, mu0, |k, mu| {
        let ck = c * weights.map_or(1.0, |w| w[k]);
        let z = y[k] - mu;
        if ck <= 0.0 {
            return if z > 0.0 { (z, 1.0) } else { (0.0, 0.0) };
        }
        let r = (z * z + 4.0 * ck).sqrt();
        // (z + r) / 2 loses all digits for large negative z
        let x = if z >= 0.0 {
            0.5 * (z + r)
        } else {
            2.0 * ck / (r - z)
        };
        (x, x / r)
    });
}

/// Proximal map of `c * sum_k x_k ln x_k`. Entries of `y` equal to negative
/// infinity are mapped to zero.
pub fn prox_neg_entropy(y: &[f64], c: f64, guess: Option<&[f64]>, out: &mut [f64]) {
    let ln_c = c.ln();
    // stationarity: x - y + mu + c (ln x + 1) = 0
    let mu0 = mu_estimate(guess, y, |k, x| y[k] - x - c * (x.ln() + 1.0));
    solve_mu(y, out, mu0, |k, mu| {
        // x + c ln x = y_k - mu - c; with x = c w this is w + ln w = a
        let a = (y[k] - mu - c) / c - ln_c;
        let x = c * wexp(a);
        (x, x / (x + c))
    });
}

/// Proximal map of `c * ||x - center||_1`.
pub fn prox_l1_centered(y: &[f64], c: f64, center: &[f64], out: &mut [f64]) {
    solve_mu(y, out, None, |k, mu| {
        let d = y[k] - mu - center[k];
        let v = if d > c {
            center[k] + d - c
        } else if d < -c {
            center[k] + d + c
        } else {
            return (center[k], 0.0);
        };
        if v > 0.0 {
            (v, 1.0)
        } else {
            (0.0, 0.0)
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::project_simplex;

    fn objective(phi: &dyn Fn(&[f64]) -> f64, x: &[f64], y: &[f64]) -> f64 {
        phi(x) + 0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    }

    /// Checks that no nearby feasible point improves on `x`.
    fn assert_local_min(phi: &dyn Fn(&[f64]) -> f64, x: &[f64], y: &[f64]) {
        let f0 = objective(phi, x, y);
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for a in 0..x.len() {
            for b in 0..x.len() {
                if a == b {
                    continue;
                }
                for h in [1e-4f64, 1e-6] {
                    let mut z = x.to_vec();
                    let t = h.min(z[b]);
                    z[a] += t;
                    z[b] -= t;
                    if t > 0.0 {
                        assert!(
                            objective(phi, &z, y) >= f0 - 1e-12,
                            "{x:?} improves along {a},{b}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn wexp_solves_its_equation() {
        for a in [-800.0, -30.0, -1.0, 0.0, 0.5, 1.0, 3.0, 50.0, 1e6] {
            let w: f64 = wexp(a);
            if a > -700.0 {
                assert!((w + w.ln() - a).abs() <= 1e-12 * (1.0 + a.abs()), "{a} {w}");
            }
        }
    }

    #[test]
    fn barrier_prox_is_optimal() {
        let y = [0.9, -0.3, 0.2, 0.05];
        for c in [1e-6, 1e-2, 1.0, 50.0] {
            let mut x = [0.0; 4];
            prox_log_barrier(&y, c, None, None, &mut x);
            let mut z = [0.0; 4];
            prox_log_barrier(&y, c, None, Some(&[0.7, 0.1, 0.1, 0.1]), &mut z);
            for (a, b) in x.iter().zip(&z) {
                assert!((a - b).abs() < 1e-12);
            }
            let phi = |v: &[f64]| -c * v.iter().map(|t| t.ln()).sum::<f64>();
            assert_local_min(&phi, &x, &y);
        }
        let w = [0.0, 0.5, 0.2, 0.3];
        let mut x = [0.0; 4];
        prox_log_barrier(&y, 0.3, Some(&w), None, &mut x);
        let phi = |v: &[f64]| {
            -0.3 * v
                .iter()
                .zip(&w)
                .filter(|(_, &wk)| wk > 0.0)
                .map(|(t, wk)| wk * t.ln())
                .sum::<f64>()
        };
        assert_local_min(&phi, &x, &y);
    }

    #[test]
    fn entropy_prox_is_optimal() {
        let y = [0.9, -0.3, 0.2, 0.05];
        for c in [1e-4, 0.1, 1.0, 30.0] {
            let mut x = [0.0; 4];
            prox_neg_entropy(&y, c, None, &mut x);
            let mut z = [0.0; 4];
            prox_neg_entropy(&y, c, Some(&[0.1, 0.1, 0.1, 0.7]), &mut z);
            for (a, b) in x.iter().zip(&z) {
                assert!((a - b).abs() < 1e-12);
            }
            let phi = |v: &[f64]| {
                c * v
                    .iter()
                    .filter(|&&t| t > 0.0)
                    .map(|t| t * t.ln())
                    .sum::<f64>()
            };
            assert_local_min(&phi, &x, &y);
        }
        let mut x = [0.0; 3];
        prox_neg_entropy(&[0.2, f64::NEG_INFINITY, 0.1], 0.5, None, &mut x);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn l1_prox_is_optimal_and_reduces_to_projection() {
        let y = [0.9, -0.3, 0.2, 0.05];
        let center = [0.1, 0.4, 0.25, 0.25];
        for c in [0.0, 0.05, 0.3, 2.0] {
            let mut x = [0.0; 4];
            prox_l1_centered(&y, c, &center, &mut x);
            let phi = |v: &[f64]| {
                c * v
                    .iter()
                    .zip(&center)
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            };
            assert_local_min(&phi, &x, &y);
            if c == 0.0 {
                let p = project_simplex(&y).unwrap();
                for (a, b) in x.iter().zip(p.probs()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
            if c == 2.0 {
                assert_eq!(x.to_vec(), center.to_vec());
            }
        }
    }
}
