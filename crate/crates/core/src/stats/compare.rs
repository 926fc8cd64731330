//! Paired comparison of two models' probabilities for the realised outcome,
//! stratified by outcome and by the presence of a genotype history.

use super::wilcoxon::{wilcoxon_signed_rank, Alternative, WilcoxonResult};
use super::StatsError;
use crate::domain::Outcome;
use crate::math::{mean, sample_variance};
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CellSummary {
    pub outcome: Outcome,
    pub with_history: bool,
    /// `true` for the history model, `false` for the other one.
    pub history_model: bool,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StratumTest {
    pub outcome: Outcome,
    /// Restricted to rows with a genotype history.
    pub history_only: bool,
    pub n: usize,
    /// `None` when the stratum is empty or every difference is zero.
    pub result: Option<WilcoxonResult>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbabilityComparison {
    pub cells: Vec<CellSummary>,
    pub tests: Vec<StratumTest>,
}

/// Compares the probabilities two models give to the observed outcome.
///
/// `h_success` and `nh_success` are each model's probability of success per
/// row. For failures the probability of failure is used. Every stratum is
/// tested one-sided for the history model giving higher probabilities.
pub fn compare_probability_distributions(
    h_success: &[f64],
    nh_success: &[f64],
    outcomes: &[Outcome],
    with_history: &[bool],
) -> Result<ProbabilityComparison, StatsError> {
    let n = outcomes.len();
    if h_success.len() != n || nh_success.len() != n || with_history.len() != n {
        return Err(StatsError::LengthMismatch);
    }
    let realised = |p: f64, o: Outcome| if o == Outcome::Success { p } else { 1.0 - p };
    let h: Vec<f64> = h_success.iter().zip(outcomes).map(|(&p, &o)| realised(p, o)).collect();
    let nh: Vec<f64> = nh_success.iter().zip(outcomes).map(|(&p, &o)| realised(p, o)).collect();

    let mut cells = Vec::new();
    for outcome in [Outcome::Success, Outcome::Failure] {
        for flag in [true, false] {
            let rows: Vec<usize> = (0..n).filter(|&i| outcomes[i] == outcome && with_history[i] == flag).collect();
            for (history_model, probs) in [(true, &h), (false, &nh)] {
                let v: Vec<f64> = rows.iter().map(|&i| probs[i]).collect();
                let (m, sd) = match v.len() {
                    0 => (f64::NAN, f64::NAN),
                    1 => (v[0], 0.0),
                    _ => (mean(&v), libm::sqrt(sample_variance(&v))),
                };
                cells.push(CellSummary { outcome, with_history: flag, history_model, n: v.len(), mean: m, sd });
            }
        }
    }

    let mut tests = Vec::new();
    for outcome in [Outcome::Success, Outcome::Failure] {
        for history_only in [false, true] {
            let diffs: Vec<f64> =
                (0..n).filter(|&i| outcomes[i] == outcome && (!history_only || with_history[i])).map(|i| h[i] - nh[i]).collect();
            let result = match wilcoxon_signed_rank(&diffs, Alternative::Greater) {
                Ok(r) => Some(r),
                Err(StatsError::AllZero) => None,
                Err(e) => return Err(e),
            };
            tests.push(StratumTest { outcome, history_only, n: diffs.len(), result });
        }
    }
    Ok(ProbabilityComparison { cells, tests })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_models_are_degenerate() {
        let p = [0.7, 0.2, 0.6, 0.4];
        let o = [Outcome::Success, Outcome::Failure, Outcome::Success, Outcome::Failure];
        let c = compare_probability_distributions(&p, &p, &o, &[true, false, false, true]).unwrap();
        assert!(c.tests.iter().all(|t| t.result.is_none()));
        let total: usize = c.cells.iter().filter(|c| c.history_model).map(|c| c.n).sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn shifted_failures_are_significant() {
        let n = 8;
        let o = alloc::vec![Outcome::Failure; n];
        let nh: Vec<f64> = (0..n).map(|i| 0.3 + 0.05 * i as f64).collect();
        let h: Vec<f64> = nh.iter().map(|p| p - 0.01).collect();
        let c = compare_probability_distributions(&h, &nh, &o, &alloc::vec![false; n]).unwrap();
        let failures = c.tests.iter().find(|t| t.outcome == Outcome::Failure && !t.history_only).unwrap();
        let p = failures.result.unwrap().p_value;
        assert!((p - 0.5f64.powi(n as i32)).abs() < 1e-15);
    }
}
