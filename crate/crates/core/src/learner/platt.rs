//! Platt scaling of SVM decision values into failure probabilities.

use crate::math::decreasing_sigmoid;
use crate::persistence::sigmoid::{fit_sigmoid_nll, Interval};
use alloc::vec::Vec;

use super::LearnerError;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlattScaling {
    pub a: f64,
    pub b: f64,
    /// Slope before the `a <= 0` constraint was imposed.
    pub unconstrained_a: f64,
    /// The unconstrained slope was positive, i.e. larger decisions meant
    /// fewer failures.
    pub orientation_flipped: bool,
    /// Mean cross-entropy against the smoothed targets.
    pub nll: f64,
}

impl PlattScaling {
    /// `P(failure) = 1 / (1 + e^(a d + b))`.
    pub fn prob_failure(&self, decision: f64) -> f64 {
        decreasing_sigmoid(self.a * decision + self.b)
    }

    pub fn prob_success(&self, decision: f64) -> f64 {
        1.0 - self.prob_failure(decision)
    }
}

/// Smoothed targets `(N+ + 1)/(N+ + 2)` for positives and `1/(N- + 2)` for
/// negatives.
pub fn platt_targets(failures: &[bool]) -> Vec<f64> {
    let n_pos = failures.iter().filter(|&&f| f).count() as f64;
    let n_neg = failures.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    failures.iter().map(|&f| if f { hi } else { lo }).collect()
}

/// Fits `(a, b)` with `a <= 0` on decision values where `true` marks a
/// failure (the +1 class).
pub fn platt_calibrate(decisions: &[f64], failures: &[bool]) -> Result<PlattScaling, LearnerError> {
    if decisions.len() != failures.len() {
        return Err(LearnerError::LengthMismatch);
    }
    let n_pos = failures.iter().filter(|&&f| f).count();
    if n_pos == 0 || n_pos == failures.len() {
        return Err(LearnerError::SingleClass);
    }
    if decisions.iter().any(|d| !d.is_finite()) {
        return Err(LearnerError::NumericFailure);
    }
    let t = platt_targets(failures);
    let free = fit_sigmoid_nll(decisions, &t, Interval::REAL_LINE, Interval::REAL_LINE);
    let constrained = if free.slope <= 0.0 {
        free
    } else {
        fit_sigmoid_nll(decisions, &t, Interval::REAL_LINE, Interval::new(f64::NEG_INFINITY, 0.0))
    };
    Ok(PlattScaling {
        a: constrained.slope,
        b: constrained.intercept,
        unconstrained_a: free.slope,
        orientation_flipped: free.slope > 0.0,
        nll: constrained.nll,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_decisions() {
        let p = platt_calibrate(&[-2.0, -1.0, 1.0, 2.0], &[false, false, true, true]).unwrap();
        assert!(p.a < 0.0 && !p.orientation_flipped);
        let probs: Vec<f64> = [-2.0, -1.0, 1.0, 2.0].iter().map(|&d| p.prob_failure(d)).collect();
        assert!(probs.windows(2).all(|w| w[0] < w[1]));
        let t = platt_targets(&[false, false, true, true]);
        let grid = crate::persistence::sigmoid::grid_search(
            &[-2.0, -1.0, 1.0, 2.0],
            &t,
            Interval::new(-5.0, 5.0),
            Interval::new(-20.0, 0.0),
            201,
        );
        assert!(p.nll <= grid.nll + 1e-9);
    }

    #[test]
    fn flat_decisions_give_prior() {
        let p = platt_calibrate(&[0.3; 4], &[true, false, false, false]).unwrap();
        assert_eq!(p.a, 0.0);
        let t = platt_targets(&[true, false, false, false]);
        let mean_t = t.iter().sum::<f64>() / 4.0;
        assert!((p.prob_failure(0.3) - mean_t).abs() < 1e-9);
    }

    #[test]
    fn flipped_labels_flag() {
        let p = platt_calibrate(&[-2.0, -1.0, 1.0, 2.0], &[true, true, false, false]).unwrap();
        assert!(p.orientation_flipped && p.unconstrained_a > 0.0 && p.a == 0.0);
    }
}
