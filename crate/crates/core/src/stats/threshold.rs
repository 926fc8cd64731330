//! Decision threshold search on a fixed 1/1000 grid.

use super::{class_counts, StatsError};
use alloc::vec::Vec;

pub const THRESHOLD_GRID_STEPS: u32 = 1000;

/// Balanced accuracy of predicting positive when `p >= threshold`.
pub fn balanced_accuracy(probs: &[f64], positives: &[bool], threshold: f64) -> f64 {
    let (n_pos, n_neg) = class_counts(positives);
    let (tp, tn) = confusion(probs, positives, threshold);
    0.5 * (tp as f64 / n_pos as f64 + tn as f64 / n_neg as f64)
}

fn confusion(probs: &[f64], positives: &[bool], threshold: f64) -> (usize, usize) {
    let mut tp = 0;
    let mut tn = 0;
    for (&p, &y) in probs.iter().zip(positives) {
        match (p >= threshold, y) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            _ => {}
        }
    }
    (tp, tn)
}

/// Lowest grid point `i/1000`, `i = 1..999`, maximising balanced accuracy
/// when predicting positive for `p >= threshold`.
pub fn tune_threshold(probs: &[f64], positives: &[bool]) -> Result<f64, StatsError> {
    if probs.len() != positives.len() {
        return Err(StatsError::LengthMismatch);
    }
    let (n_pos, n_neg) = class_counts(positives);
    if n_pos == 0 || n_neg == 0 {
        return Err(StatsError::SingleClass);
    }
    let mut pos: Vec<f64> = probs.iter().zip(positives).filter(|e| *e.1).map(|e| *e.0).collect();
    let mut neg: Vec<f64> = probs.iter().zip(positives).filter(|e| !*e.1).map(|e| *e.0).collect();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let mut best = (0u128, 0.0);
    for i in 1..THRESHOLD_GRID_STEPS {
        let thr = i as f64 / THRESHOLD_GRID_STEPS as f64;
        let tp = (pos.len() - pos.partition_point(|&p| p < thr)) as u128;
        let tn = neg.partition_point(|&p| p < thr) as u128;
        // tp/P + tn/N compared exactly after scaling by P*N
        let score = tp * n_neg as u128 + tn * n_pos as u128;
        if i == 1 || score > best.0 {
            best = (score, thr);
        }
    }
    Ok(best.1)
}
