//! Calibrated linear SVM: training, model selection and the final fit.

pub mod cv;
pub mod platt;
pub mod svm;

use alloc::vec::Vec;

pub use cv::{random_search_cv, CvConfig, CvOutcome, CvResult, FoldPlan, Selection};
pub use platt::{platt_calibrate, PlattScaling};
pub use svm::{train_svm, SvmOptions, SvmSolution};

use crate::domain::Outcome;
use crate::features::SparseVector;
use crate::stats::{tune_threshold, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum LearnerError {
    #[error("training data must contain both outcomes")]
    SingleClass,
    #[error("C must be positive and finite, got {0}")]
    InvalidC(f64),
    #[error("inputs have different lengths")]
    LengthMismatch,
    #[error("need at least {needed} patients, got {patients}")]
    TooFewPatients { patients: usize, needed: usize },
    #[error("no fold assignment with both classes in every fold after {0} attempts")]
    FoldsExhausted(usize),
    #[error("no candidate values of C")]
    NoCandidates,
    #[error("non-finite values during training")]
    NumericFailure,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Trained, calibrated classifier. Failure is the positive class.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SvmModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
    pub platt: PlattScaling,
    /// Predict failure when `P(failure) >= threshold`.
    pub threshold: f64,
}

impl SvmModel {
    pub fn decision(&self, x: &SparseVector) -> f64 {
        x.dot(&self.w) + self.b
    }

    pub fn prob_failure(&self, x: &SparseVector) -> f64 {
        self.platt.prob_failure(self.decision(x))
    }

    pub fn prob_success(&self, x: &SparseVector) -> f64 {
        1.0 - self.prob_failure(x)
    }

    pub fn predict(&self, x: &SparseVector) -> Outcome {
        if self.prob_failure(x) >= self.threshold {
            Outcome::Failure
        } else {
            Outcome::Success
        }
    }
}

/// Out-of-fold decision values from a fresh grouped k-fold pass.
pub fn out_of_fold_decisions(
    rows: &[SparseVector],
    positive: &[bool],
    patients: &[&str],
    dim: usize,
    c: f64,
    folds: usize,
    seed: u64,
    svm: &SvmOptions,
) -> Result<Vec<f64>, LearnerError> {
    let plan = cv::fold_plan(patients, positive, folds, 1, seed, 1000)?;
    let fold_of = &plan.assignments[0];
    let mut out = alloc::vec![0.0; rows.len()];
    for f in 0..folds {
        let train: Vec<usize> = (0..rows.len()).filter(|&i| fold_of[i] != f).collect();
        let train_rows: Vec<&SparseVector> = train.iter().map(|&i| &rows[i]).collect();
        let train_y: Vec<bool> = train.iter().map(|&i| positive[i]).collect();
        let sol = train_svm(&train_rows, &train_y, dim, c, svm)?;
        for i in (0..rows.len()).filter(|&i| fold_of[i] == f) {
            out[i] = sol.decision(&rows[i]);
        }
    }
    Ok(out)
}

/// Refits on all training rows, calibrates on out-of-fold decisions and
/// picks the balanced-accuracy threshold on the same calibrated values.
pub fn fit_final(
    rows: &[SparseVector],
    positive: &[bool],
    patients: &[&str],
    dim: usize,
    c: f64,
    folds: usize,
    seed: u64,
    svm: &SvmOptions,
) -> Result<SvmModel, LearnerError> {
    let all: Vec<&SparseVector> = rows.iter().collect();
    let sol = train_svm(&all, positive, dim, c, svm)?;
    let oof = out_of_fold_decisions(rows, positive, patients, dim, c, folds, seed, svm)?;
    let platt = platt_calibrate(&oof, positive)?;
    let probs: Vec<f64> = oof.iter().map(|&d| platt.prob_failure(d)).collect();
    let threshold = tune_threshold(&probs, positive)?;
    Ok(SvmModel { w: sol.w, b: sol.b, c, platt, threshold })
}
