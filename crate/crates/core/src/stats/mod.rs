//! Evaluation statistics: ROC AUC, classification metrics, paired
//! significance tests, multiple-testing control and threshold search.

pub mod auc;
pub mod compare;
pub mod metrics;
pub mod hypothesis;
pub mod threshold;
pub mod wilcoxon;

pub use auc::{roc_auc, roc_curve, RocPoint};
pub use compare::{compare_probability_distributions, CellSummary, ProbabilityComparison, StratumTest};
pub use metrics::{bootstrap_standard_errors, classification_metrics, MetricErrors, MetricsReport};
pub use hypothesis::{benjamini_hochberg, nadeau_bengio_test, NbTestResult};
pub use threshold::{balanced_accuracy, tune_threshold, THRESHOLD_GRID_STEPS};
pub use wilcoxon::{wilcoxon_signed_rank, Alternative, WilcoxonResult, EXACT_MAX_N};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("every difference is zero")]
    AllZero,
    #[error("need at least {0} values")]
    TooFew(usize),
    #[error("input lengths differ")]
    LengthMismatch,
    #[error("input contains a non-finite value")]
    NonFinite,
}

pub(crate) fn class_counts(positives: &[bool]) -> (usize, usize) {
    let p = positives.iter().filter(|&&b| b).count();
    (p, positives.len() - p)
}
