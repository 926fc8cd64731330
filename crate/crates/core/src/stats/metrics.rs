//! Classification metrics with failure as the positive class, and their
//! bootstrap standard errors.

use super::{auc::roc_auc, class_counts, StatsError};
use crate::math::sample_variance;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricErrors {
    pub auc: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub specificity: f64,
    /// Bootstrap resamples that contained both classes.
    pub resamples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub auc: f64,
    pub accuracy: f64,
    /// Sensitivity on the positive class.
    pub recall: f64,
    /// Sensitivity on the negative class.
    pub specificity: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub threshold: f64,
    pub bootstrap_se: Option<MetricErrors>,
}

/// Metrics of probabilities for the positive class at a fixed threshold.
pub fn classification_metrics(probs: &[f64], positives: &[bool], threshold: f64) -> Result<MetricsReport, StatsError> {
    let auc = roc_auc(probs, positives)?;
    let (n_pos, n_neg) = class_counts(positives);
    let mut tp = 0usize;
    let mut tn = 0usize;
    for (&p, &y) in probs.iter().zip(positives) {
        let predicted = p >= threshold;
        if predicted && y {
            tp += 1;
        } else if !predicted && !y {
            tn += 1;
        }
    }
    Ok(MetricsReport {
        auc,
        accuracy: (tp + tn) as f64 / probs.len() as f64,
        recall: tp as f64 / n_pos as f64,
        specificity: tn as f64 / n_neg as f64,
        n_pos,
        n_neg,
        threshold,
        bootstrap_se: None,
    })
}

/// Standard deviation of each metric over `resamples` bootstrap draws of
/// the rows. Draws with a single class are discarded.
pub fn bootstrap_standard_errors(
    probs: &[f64],
    positives: &[bool],
    threshold: f64,
    resamples: usize,
    seed: u64,
) -> Result<MetricErrors, StatsError> {
    if probs.len() != positives.len() {
        return Err(StatsError::LengthMismatch);
    }
    let n = probs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: [Vec<f64>; 4] = Default::default();
    let mut p = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..resamples {
        p.clear();
        y.clear();
        for _ in 0..n {
            let i = rng.random_range(0..n);
            p.push(probs[i]);
            y.push(positives[i]);
        }
        if let Ok(m) = classification_metrics(&p, &y, threshold) {
            values[0].push(m.auc);
            values[1].push(m.accuracy);
            values[2].push(m.recall);
            values[3].push(m.specificity);
        }
    }
    if values[0].len() < 2 {
        return Err(StatsError::TooFew(2));
    }
    let sd = |v: &[f64]| libm::sqrt(sample_variance(v));
    Ok(MetricErrors {
        auc: sd(&values[0]),
        accuracy: sd(&values[1]),
        recall: sd(&values[2]),
        specificity: sd(&values[3]),
        resamples: values[0].len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_based_metrics() {
        let m = classification_metrics(&[0.9, 0.2, 0.6, 0.1], &[true, true, false, false], 0.5).unwrap();
        assert_eq!((m.accuracy, m.recall, m.specificity), (0.5, 0.5, 0.5));
        assert_eq!(m.auc, 0.75);
        let se = bootstrap_standard_errors(&[0.9, 0.2, 0.6, 0.1], &[true, true, false, false], 0.5, 200, 1).unwrap();
        assert!(se.auc > 0.0 && se.resamples <= 200);
    }
}
