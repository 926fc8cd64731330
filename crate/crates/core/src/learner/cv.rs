//! Random search over C with repeated patient-grouped cross-validation and
//! the lowest-C selection rule.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::svm::{train_svm_warm, SvmOptions};
use super::LearnerError;
use crate::features::SparseVector;
use crate::stats::{benjamini_hochberg, roc_auc, wilcoxon_signed_rank, Alternative, StatsError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    pub n_candidates: usize,
    pub folds: usize,
    pub repeats: usize,
    /// Range of `ln C`.
    pub log_c_min: f64,
    pub log_c_max: f64,
    /// Family-wise level of the Benjamini-Hochberg step.
    pub alpha: f64,
    pub seed: u64,
    pub svm: SvmOptions,
    /// Attempts at drawing folds with both classes everywhere.
    pub max_fold_attempts: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            n_candidates: 60,
            folds: 5,
            repeats: 5,
            log_c_min: -14.0,
            log_c_max: 0.0,
            alpha: 0.05,
            seed: 0,
            svm: SvmOptions::default(),
            max_fold_attempts: 1000,
        }
    }
}

/// Fold index of every row, for each repeat.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldPlan {
    pub folds: usize,
    pub assignments: Vec<Vec<usize>>,
    /// Draws discarded because some fold lacked a class.
    pub resampled: usize,
}

/// Row-balanced patient-grouped folds: patients are shuffled and each is
/// put in the fold with the fewest rows so far (lowest index on ties).
/// Draws leaving a class missing from some validation or training part are
/// discarded and redrawn.
pub fn grouped_folds(
    patients: &[&str],
    positive: &[bool],
    folds: usize,
    rng: &mut ChaCha8Rng,
    max_attempts: usize,
) -> Result<(Vec<usize>, usize), LearnerError> {
    let mut rows_of: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, &p) in patients.iter().enumerate() {
        rows_of.entry(p).or_default().push(i);
    }
    if rows_of.len() < folds || folds < 2 {
        return Err(LearnerError::TooFewPatients { patients: rows_of.len(), needed: folds.max(2) });
    }
    let groups: Vec<&Vec<usize>> = rows_of.values().collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let total_pos = positive.iter().filter(|&&p| p).count();
    let total_neg = positive.len() - total_pos;
    for attempt in 0..max_attempts.max(1) {
        order.shuffle(rng);
        let mut fold_of = vec![0usize; patients.len()];
        let mut sizes = vec![0usize; folds];
        let mut pos = vec![0usize; folds];
        for &g in &order {
            let f = (0..folds).min_by_key(|&f| (sizes[f], f)).expect("folds > 0");
            for &i in groups[g] {
                fold_of[i] = f;
                sizes[f] += 1;
                if positive[i] {
                    pos[f] += 1;
                }
            }
        }
        let valid = (0..folds).all(|f| {
            let neg = sizes[f] - pos[f];
            pos[f] > 0 && neg > 0 && pos[f] < total_pos && neg < total_neg
        });
        if valid {
            return Ok((fold_of, attempt));
        }
    }
    Err(LearnerError::FoldsExhausted(max_attempts))
}

pub fn fold_plan(patients: &[&str], positive: &[bool], folds: usize, repeats: usize, seed: u64, max_attempts: usize) -> Result<FoldPlan, LearnerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = Vec::with_capacity(repeats);
    let mut resampled = 0;
    for _ in 0..repeats {
        let (a, r) = grouped_folds(patients, positive, folds, &mut rng, max_attempts)?;
        resampled += r;
        assignments.push(a);
    }
    Ok(FoldPlan { folds, assignments, resampled })
}

/// `n` draws of `C = e^u` with `u ~ U(log_c_min, log_c_max)`.
pub fn sample_candidates(n: usize, log_c_min: f64, log_c_max: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| libm::exp(log_c_min + (log_c_max - log_c_min) * rng.random::<f64>())).collect()
}

/// One (repeat, fold) cell of the cross-validation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CvTask {
    pub repeat: usize,
    pub fold: usize,
}

impl FoldPlan {
    pub fn tasks(&self) -> Vec<CvTask> {
        (0..self.assignments.len()).flat_map(|repeat| (0..self.folds).map(move |fold| CvTask { repeat, fold })).collect()
    }
}

/// Validation AUC of every candidate C on one fold. Candidates are trained
/// in increasing order of C, each warm-started from the previous solution.
pub fn evaluate_task(
    rows: &[SparseVector],
    positive: &[bool],
    dim: usize,
    plan: &FoldPlan,
    task: CvTask,
    candidates: &[f64],
    svm: &SvmOptions,
) -> Result<Vec<f64>, LearnerError> {
    let fold_of = &plan.assignments[task.repeat];
    let train: Vec<usize> = (0..rows.len()).filter(|&i| fold_of[i] != task.fold).collect();
    let valid: Vec<usize> = (0..rows.len()).filter(|&i| fold_of[i] == task.fold).collect();
    let train_rows: Vec<&SparseVector> = train.iter().map(|&i| &rows[i]).collect();
    let train_y: Vec<bool> = train.iter().map(|&i| positive[i]).collect();
    let valid_y: Vec<bool> = valid.iter().map(|&i| positive[i]).collect();

    let mut by_c: Vec<usize> = (0..candidates.len()).collect();
    by_c.sort_by(|&a, &b| candidates[a].total_cmp(&candidates[b]).then(a.cmp(&b)));
    let mut scores = vec![0.0; candidates.len()];
    let mut warm: Option<Vec<f64>> = None;
    for k in by_c {
        let sol = train_svm_warm(&train_rows, &train_y, dim, candidates[k], svm, warm.as_deref())?;
        let decisions: Vec<f64> = valid.iter().map(|&i| sol.decision(&rows[i])).collect();
        scores[k] = roc_auc(&decisions, &valid_y)?;
        warm = Some(sol.alpha);
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CvResult {
    pub c: f64,
    /// One score per (repeat, fold), repeat-major.
    pub fold_scores: Vec<f64>,
    pub mean_auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Selection {
    pub best: usize,
    /// Two-sided p-value against the best candidate; `None` for the best.
    pub p_values: Vec<Option<f64>>,
    pub rejected: Vec<bool>,
    pub selected: usize,
}

/// Best mean AUC, then the smallest C whose scores are not significantly
/// different from the best after Benjamini-Hochberg correction.
pub fn select_candidate(results: &[CvResult], alpha: f64) -> Result<Selection, LearnerError> {
    if results.is_empty() {
        return Err(LearnerError::NoCandidates);
    }
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        let b = &results[best];
        if r.mean_auc > b.mean_auc || (r.mean_auc == b.mean_auc && r.c < b.c) {
            best = i;
        }
    }
    let mut p_values = vec![None; results.len()];
    let mut family = Vec::new();
    for (i, r) in results.iter().enumerate() {
        if i == best {
            continue;
        }
        let diffs: Vec<f64> = r.fold_scores.iter().zip(&results[best].fold_scores).map(|(a, b)| a - b).collect();
        let p = match wilcoxon_signed_rank(&diffs, Alternative::TwoSided) {
            Ok(w) => w.p_value,
            Err(StatsError::AllZero) => 1.0,
            Err(e) => return Err(e.into()),
        };
        p_values[i] = Some(p);
        family.push((i, p));
    }
    let flags = benjamini_hochberg(&family.iter().map(|f| f.1).collect::<Vec<_>>(), alpha);
    let mut rejected = vec![false; results.len()];
    for (&(i, _), &r) in family.iter().zip(&flags) {
        rejected[i] = r;
    }
    let mut selected = best;
    for (i, r) in results.iter().enumerate() {
        if !rejected[i] && (r.c < results[selected].c) {
            selected = i;
        }
    }
    Ok(Selection { best, p_values, rejected, selected })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub results: Vec<CvResult>,
    pub selection: Selection,
    pub selected_c: f64,
    pub plan: FoldPlan,
}

/// Collects per-task candidate scores into per-candidate results.
pub fn assemble(candidates: &[f64], plan: &FoldPlan, task_scores: &[Vec<f64>], alpha: f64) -> Result<CvOutcome, LearnerError> {
    let results: Vec<CvResult> = candidates
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let fold_scores: Vec<f64> = task_scores.iter().map(|s| s[k]).collect();
            let mean_auc = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
            CvResult { c, fold_scores, mean_auc }
        })
        .collect();
    let selection = select_candidate(&results, alpha)?;
    let selected_c = results[selection.selected].c;
    Ok(CvOutcome { results, selection, selected_c, plan: plan.clone() })
}

/// Candidate draws and fold plan for a search, derived from the seed.
pub fn prepare(patients: &[&str], positive: &[bool], config: &CvConfig) -> Result<(Vec<f64>, FoldPlan), LearnerError> {
    if config.n_candidates == 0 {
        return Err(LearnerError::NoCandidates);
    }
    let candidates = sample_candidates(config.n_candidates, config.log_c_min, config.log_c_max, config.seed);
    let plan = fold_plan(patients, positive, config.folds, config.repeats, config.seed ^ 0x5eed_f01d, config.max_fold_attempts)?;
    Ok((candidates, plan))
}

/// Sequential random search; see [`prepare`], [`evaluate_task`] and
/// [`assemble`] for running the tasks elsewhere.
pub fn random_search_cv(
    rows: &[SparseVector],
    positive: &[bool],
    patients: &[&str],
    dim: usize,
    config: &CvConfig,
) -> Result<CvOutcome, LearnerError> {
    let (candidates, plan) = prepare(patients, positive, config)?;
    let scores = plan
        .tasks()
        .into_iter()
        .map(|t| evaluate_task(rows, positive, dim, &plan, t, &candidates, &config.svm))
        .collect::<Result<Vec<_>, _>>()?;
    assemble(&candidates, &plan, &scores, config.alpha)
}
