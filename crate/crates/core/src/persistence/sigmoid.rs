//! Box-constrained maximum likelihood fit of `f(x) = 1 / (1 + e^(c + s x))`
//! against soft targets in `[0, 1]`.
//!
//! The negative log-likelihood is jointly convex in the intercept `c` and
//! the slope `s`. The minimiser profiles out `c` for each `s` with a
//! safeguarded Newton iteration, then bisects on the derivative of the
//! profile, which is monotone because partial minimisation preserves
//! convexity.

use crate::math::{logistic, softplus};
use alloc::vec::Vec;
use libm::fabs;

/// Closed interval with possibly infinite ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Interval { lo, hi }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidSolution {
    pub intercept: f64,
    pub slope: f64,
    /// Mean negative log-likelihood at the solution.
    pub nll: f64,
    /// Outer iterations spent on the slope.
    pub iterations: u32,
}

/// Mean negative log-likelihood of targets `t` under `1 / (1 + e^(c + s x))`.
pub fn sigmoid_nll(x: &[f64], t: &[f64], intercept: f64, slope: f64) -> f64 {
    debug_assert_eq!(x.len(), t.len());
    let n = x.len() as f64;
    x.iter()
        .zip(t)
        .map(|(&xi, &ti)| {
            let z = intercept + slope * xi;
            ti * softplus(z) + (1.0 - ti) * softplus(-z)
        })
        .sum::<f64>()
        / n
}

// Gradient of the mean NLL with respect to (intercept, slope).
fn gradient(x: &[f64], t: &[f64], c: f64, s: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let mut gc = 0.0;
    let mut gs = 0.0;
    for (&xi, &ti) in x.iter().zip(t) {
        let r = logistic(c + s * xi) - (1.0 - ti);
        gc += r;
        gs += r * xi;
    }
    (gc / n, gs / n)
}

fn intercept_derivatives(x: &[f64], t: &[f64], c: f64, s: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let mut g = 0.0;
    let mut h = 0.0;
    for (&xi, &ti) in x.iter().zip(t) {
        let p = logistic(c + s * xi);
        g += p - (1.0 - ti);
        h += p * (1.0 - p);
    }
    (g / n, h / n)
}

// Finds a bracket [a, b] inside `bounds` on which the increasing function
// `deriv` changes sign, or reports the bound where the minimum sits.
enum Bracket {
    At(f64),
    Between(f64, f64),
}

fn bracket(bounds: Interval, start: f64, deriv: &mut impl FnMut(f64) -> f64) -> Bracket {
    let start = bounds.clamp(start);
    let d0 = deriv(start);
    if d0 == 0.0 {
        return Bracket::At(start);
    }
    let mut step = 1.0_f64.max(fabs(start));
    let mut prev = start;
    loop {
        let next = if d0 > 0.0 { bounds.clamp(prev - step) } else { bounds.clamp(prev + step) };
        if next == prev {
            return Bracket::At(prev);
        }
        let d = deriv(next);
        if (d0 > 0.0) != (d > 0.0) || d == 0.0 {
            return if d0 > 0.0 { Bracket::Between(next, prev) } else { Bracket::Between(prev, next) };
        }
        if !next.is_finite() || step > 1e300 {
            return Bracket::At(next);
        }
        prev = next;
        step *= 2.0;
    }
}

// Minimises over the intercept for a fixed slope.
fn best_intercept(x: &[f64], t: &[f64], s: f64, bounds: Interval, warm: f64) -> f64 {
    let mut deriv = |c: f64| intercept_derivatives(x, t, c, s).0;
    let (mut a, mut b) = match bracket(bounds, warm, &mut deriv) {
        Bracket::At(c) => return c,
        Bracket::Between(a, b) => (a, b),
    };
    let mut c = bounds.clamp(warm);
    if !(c > a && c < b) {
        c = 0.5 * (a + b);
    }
    for _ in 0..200 {
        let (g, h) = intercept_derivatives(x, t, c, s);
        if g == 0.0 {
            return c;
        }
        if g > 0.0 {
            b = c;
        } else {
            a = c;
        }
        let newton = if h > 0.0 { c - g / h } else { f64::NAN };
        let next = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if fabs(next - c) <= 1e-15 * (1.0 + fabs(c)) || b - a <= 1e-15 * (1.0 + fabs(c)) {
            return next;
        }
        c = next;
    }
    c
}

/// Minimises the mean NLL over the box `intercept x slope`.
///
/// Requires `x` and `t` of equal, non-zero length. Unbounded directions are
/// fine as long as the minimum is attained, which holds whenever the targets
/// are strictly inside `(0, 1)` on average.
pub fn fit_sigmoid_nll(x: &[f64], t: &[f64], intercept: Interval, slope: Interval) -> SigmoidSolution {
    assert_eq!(x.len(), t.len());
    assert!(!x.is_empty());
    let constant_x = x.iter().all(|&v| v == x[0]);
    let mut iterations = 0;

    let slope_value = if constant_x && slope.contains(0.0) {
        // the slope is not identifiable; keep it at zero
        0.0
    } else {
        let mut warm = 0.0;
        let mut deriv = |s: f64| {
            warm = best_intercept(x, t, s, intercept, warm);
            gradient(x, t, warm, s).1
        };
        let start = slope.clamp(0.0);
        match bracket(slope, start, &mut deriv) {
            Bracket::At(s) => s,
            Bracket::Between(mut a, mut b) => {
                while iterations < 200 {
                    iterations += 1;
                    let mid = 0.5 * (a + b);
                    if mid <= a || mid >= b || b - a <= 1e-14 * (1.0 + fabs(mid)) {
                        break;
                    }
                    if deriv(mid) > 0.0 {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                0.5 * (a + b)
            }
        }
    };
    let c = best_intercept(x, t, slope_value, intercept, 0.0);
    SigmoidSolution { intercept: c, slope: slope_value, nll: sigmoid_nll(x, t, c, slope_value), iterations }
}

/// Dense grid search over a bounded box, used as a reference in tests and
/// diagnostics.
pub fn grid_search(x: &[f64], t: &[f64], intercept: Interval, slope: Interval, points: usize) -> SigmoidSolution {
    assert!(points >= 2);
    let mut best = SigmoidSolution { intercept: 0.0, slope: 0.0, nll: f64::INFINITY, iterations: 0 };
    let grid = |iv: Interval, i: usize| iv.lo + (iv.hi - iv.lo) * i as f64 / (points - 1) as f64;
    let cs: Vec<f64> = (0..points).map(|i| grid(intercept, i)).collect();
    for i in 0..points {
        let s = grid(slope, i);
        for &c in &cs {
            let v = sigmoid_nll(x, t, c, s);
            if v < best.nll {
                best = SigmoidSolution { intercept: c, slope: s, nll: v, iterations: 0 };
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_data_hits_the_box() {
        let x = [10.0, 10.0, 1000.0, 1000.0];
        let t = [1.0, 1.0, 0.0, 0.0];
        let sol = fit_sigmoid_nll(&x, &t, Interval::new(-20.0, 20.0), Interval::new(0.0, 1.0));
        let f = |v: f64| 1.0 / (1.0 + libm::exp(sol.intercept + sol.slope * v));
        assert!(f(10.0) > 0.9 && f(1000.0) < 0.1 && sol.slope > 0.0);
        let grid = grid_search(&x, &t, Interval::new(-20.0, 20.0), Interval::new(0.0, 1.0), 101);
        assert!(sol.nll <= grid.nll + 1e-6);
    }

    #[test]
    fn constant_inputs_give_zero_slope() {
        let x = [1.0, 1.0, 1.0, 1.0];
        let t = [0.2, 0.2, 0.8, 0.8];
        let sol = fit_sigmoid_nll(&x, &t, Interval::REAL_LINE, Interval::new(f64::NEG_INFINITY, 0.0));
        assert_eq!(sol.slope, 0.0);
        assert!(fabs(logistic(-sol.intercept) - 0.5) < 1e-12);
    }

    #[test]
    fn unbounded_matches_smooth_optimum() {
        let x = [-2.0, -1.0, 0.5, 1.0, 2.0, 3.0];
        let t = [0.9, 0.8, 0.7, 0.2, 0.3, 0.1];
        let sol = fit_sigmoid_nll(&x, &t, Interval::REAL_LINE, Interval::REAL_LINE);
        let (gc, gs) = gradient(&x, &t, sol.intercept, sol.slope);
        assert!(fabs(gc) < 1e-10 && fabs(gs) < 1e-10, "{gc} {gs}");
    }
}
