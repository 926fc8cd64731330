//! ROC AUC as the normalised Mann-Whitney U statistic.

use super::{class_counts, StatsError};
use alloc::vec::Vec;

fn order_by_score(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    idx
}

/// Twice the U statistic: every positive scored above a negative counts 2,
/// every tie counts 1.
pub fn doubled_u(scores: &[f64], positives: &[bool]) -> u128 {
    let idx = order_by_score(scores);
    let mut doubled: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut p, mut q) = (0u128, 0u128);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if positives[idx[j]] {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        doubled += p * (2 * negatives_below + q);
        negatives_below += q;
        i = j;
    }
    doubled
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn roc_auc(scores: &[f64], positives: &[bool]) -> Result<f64, StatsError> {
    if scores.len() != positives.len() {
        return Err(StatsError::LengthMismatch);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(StatsError::NonFinite);
    }
    let (n_pos, n_neg) = class_counts(positives);
    if n_pos == 0 || n_neg == 0 {
        return Err(StatsError::SingleClass);
    }
    Ok(doubled_u(scores, positives) as f64 / (2 * n_pos as u128 * n_neg as u128) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve points for every distinct score, from the strictest threshold
/// down; the first point is (0, 0) at an infinite threshold.
pub fn roc_curve(scores: &[f64], positives: &[bool]) -> Result<Vec<RocPoint>, StatsError> {
    if scores.len() != positives.len() {
        return Err(StatsError::LengthMismatch);
    }
    let (n_pos, n_neg) = class_counts(positives);
    if n_pos == 0 || n_neg == 0 {
        return Err(StatsError::SingleClass);
    }
    let mut idx = order_by_score(scores);
    idx.reverse();
    let mut out = alloc::vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if positives[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push(RocPoint { threshold: s, fpr: fp as f64 / n_neg as f64, tpr: tp as f64 / n_pos as f64 });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.2, 0.8], &[true, false]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.5, 0.7], &[true, true]), Err(StatsError::SingleClass));
    }

    #[test]
    fn curve_ends_at_one_one() {
        let c = roc_curve(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        let last = c.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert_eq!(c.len(), 5);
    }
}
