//! Multiple-testing control and the corrected resampled t-test.

use super::StatsError;
use crate::math::{mean, sample_variance, student_t_two_sided_p};
use alloc::vec;
use alloc::vec::Vec;

/// Benjamini-Hochberg step-up procedure. Returns a rejection flag per input,
/// in input order.
pub fn benjamini_hochberg(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut cutoff = 0;
    for (rank, &i) in idx.iter().enumerate() {
        if p_values[i] <= (rank + 1) as f64 * alpha / m as f64 {
            cutoff = rank + 1;
        }
    }
    let mut reject = vec![false; m];
    for &i in &idx[..cutoff] {
        reject[i] = true;
    }
    reject
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NbTestResult {
    pub t_stat: f64,
    pub df: usize,
    pub p_value: f64,
    /// `1/J + n_test/n_train`.
    pub correction_factor: f64,
    pub mean_difference: f64,
    /// The differences had zero variance.
    pub degenerate: bool,
}

/// Nadeau-Bengio corrected resampled t-test on per-run score differences.
pub fn nadeau_bengio_test(diffs: &[f64], n_train: usize, n_test: usize) -> Result<NbTestResult, StatsError> {
    let j = diffs.len();
    if j < 2 {
        return Err(StatsError::TooFew(2));
    }
    if diffs.iter().any(|d| !d.is_finite()) || n_train == 0 {
        return Err(StatsError::NonFinite);
    }
    let correction_factor = 1.0 / j as f64 + n_test as f64 / n_train as f64;
    let m = mean(diffs);
    let s2 = sample_variance(diffs);
    let df = j - 1;
    if !(s2 > 0.0) {
        let (t_stat, p_value) = if m == 0.0 { (0.0, 1.0) } else { (m.signum() * f64::INFINITY, 0.0) };
        return Ok(NbTestResult { t_stat, df, p_value, correction_factor, mean_difference: m, degenerate: true });
    }
    let t_stat = m / libm::sqrt(correction_factor * s2);
    let p_value = student_t_two_sided_p(t_stat, df as f64);
    Ok(NbTestResult { t_stat, df, p_value, correction_factor, mean_difference: m, degenerate: false })
}
