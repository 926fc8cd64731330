//! The model-comparison protocol: persistence fitting, per-seed patient
//! splits, dataset variants, model selection and evaluation, and the final
//! report.

use std::collections::BTreeMap;

use rayon::prelude::*;
use retropredict_core::cohort::{eligible_pairs, Cohort, StanfordScoreTable};
use retropredict_core::domain::{Outcome, PatientTherapyPair};
use retropredict_core::features::{
    build_dataset, build_pairs, fit_area_scales, split_by_patient, DatasetVariant, Encoding, FeatureUniverse,
    HistoryMode, LabeledDataset, PatientSplit, Row, SparseVector, WeightContext,
};
use retropredict_core::learner::cv::{self, CvOutcome};
use retropredict_core::learner::{fit_final, SvmModel};
use retropredict_core::persistence::{build_persistence_model, FitRecord, PersistenceModel};
use retropredict_core::ranking::{composite_ranking, elbow_select, RankingEntry};
use retropredict_core::stats::{
    bootstrap_standard_errors, classification_metrics, compare_probability_distributions, nadeau_bengio_test,
    MetricsReport, NbTestResult, ProbabilityComparison,
};
use retropredict_core::weighting::AreaScales;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, RunConfig};
use crate::error::Result;

/// Variants, split seeds and the pairs compared with the corrected t-test.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub variants: Vec<DatasetVariant>,
    pub seeds: Vec<u64>,
    /// `(a, b)` compares the test AUC of `a` minus that of `b`.
    pub comparisons: Vec<(DatasetVariant, DatasetVariant)>,
}

impl ExperimentPlan {
    /// Every configured variant, each compared against the reference.
    pub fn from_config(config: &RunConfig) -> Self {
        let comparisons = if config.variants.contains(&config.reference) {
            config.variants.iter().filter(|&&v| v != config.reference).map(|&v| (config.reference, v)).collect()
        } else {
            Vec::new()
        };
        ExperimentPlan { variants: config.variants.clone(), seeds: config.split_seeds.clone(), comparisons }
    }
}

/// Cohort-level inputs shared by every split.
pub struct Prepared {
    pub cohort: Cohort,
    pub table: StanfordScoreTable,
    pub persistence: PersistenceModel,
    pub pairs: Vec<PatientTherapyPair>,
    pub universe: FeatureUniverse,
}

pub fn fit_persistence(cohort: &Cohort, table: &StanfordScoreTable, config: &RunConfig) -> Result<(PersistenceModel, Vec<FitRecord>)> {
    Ok(build_persistence_model(cohort, table, &config.persistence())?)
}

pub fn pairs_of(cohort: &Cohort) -> Vec<PatientTherapyPair> {
    build_pairs(&eligible_pairs(cohort))
}

impl Prepared {
    pub fn new(cohort: Cohort, table: StanfordScoreTable, persistence: PersistenceModel) -> Self {
        let pairs = pairs_of(&cohort);
        let universe = FeatureUniverse::from_pairs(&pairs);
        Prepared { cohort, table, persistence, pairs, universe }
    }

    pub fn fit(cohort: Cohort, table: StanfordScoreTable, config: &RunConfig) -> Result<Self> {
        let (persistence, _) = fit_persistence(&cohort, &table, config)?;
        Ok(Prepared::new(cohort, table, persistence))
    }

    pub fn split(&self, config: &RunConfig, split_seed: u64) -> Result<PatientSplit> {
        let patients = self.pairs.iter().map(|p| p.therapy.patient_id.as_str());
        Ok(split_by_patient(patients, config.train_fraction, derive_seed(config.seed, split_seed, 0x5b11))?)
    }

    pub fn area_scales(&self, split: &PatientSplit) -> Result<AreaScales> {
        let train: Vec<PatientTherapyPair> =
            self.pairs.iter().filter(|p| split.train.contains(&p.therapy.patient_id)).cloned().collect();
        Ok(fit_area_scales(&self.cohort, &train)?)
    }

    pub fn weight_context<'a>(&'a self, scales: &'a AreaScales, config: &RunConfig) -> WeightContext<'a> {
        WeightContext { persistence: &self.persistence, table: &self.table, scales, same_gene_only: config.same_gene_only }
    }

    /// The dataset of one variant over every eligible therapy.
    pub fn dataset(&self, variant: DatasetVariant, ctx: &WeightContext<'_>) -> Result<LabeledDataset> {
        Ok(build_dataset(&self.cohort, &self.pairs, variant, &self.universe, Some(ctx))?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub cv: CvOutcome,
    pub model: SvmModel,
}

fn failures(rows: &[Row]) -> Vec<bool> {
    rows.iter().map(|r| r.label == Outcome::Failure).collect()
}

/// Random-search cross-validation followed by the calibrated final fit.
pub fn train(train: &LabeledDataset, config: &RunConfig, split_seed: u64) -> Result<Trained> {
    let rows: Vec<SparseVector> = train.rows.iter().map(|r| r.features.clone()).collect();
    let positive = failures(&train.rows);
    let patients: Vec<&str> = train.rows.iter().map(|r| r.patient_id.as_str()).collect();
    let dim = train.universe.len();
    let cv_config = config.cv(split_seed);
    let (candidates, plan) = cv::prepare(&patients, &positive, &cv_config)?;
    let scores = plan
        .tasks()
        .into_par_iter()
        .map(|task| cv::evaluate_task(&rows, &positive, dim, &plan, task, &candidates, &cv_config.svm))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let outcome = cv::assemble(&candidates, &plan, &scores, config.bh_alpha)?;
    let model = fit_final(
        &rows,
        &positive,
        &patients,
        dim,
        outcome.selected_c,
        config.calibration_folds,
        derive_seed(config.seed, split_seed, 0xf17a1),
        &config.svm(),
    )?;
    Ok(Trained { cv: outcome, model })
}

/// Probability of failure for every row.
pub fn predict(model: &SvmModel, data: &LabeledDataset) -> Vec<f64> {
    data.rows.iter().map(|r| model.prob_failure(&r.features)).collect()
}

/// Test-set results of one variant on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRun {
    pub split_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub selected_c: f64,
    pub metrics: MetricsReport,
}

/// Metrics of a model on its test rows, with bootstrap standard errors.
pub fn evaluate(
    model: &SvmModel,
    test: &LabeledDataset,
    n_train: usize,
    config: &RunConfig,
    split_seed: u64,
) -> Result<(VariantRun, Vec<f64>)> {
    let probs = predict(model, test);
    let positive = failures(&test.rows);
    let mut metrics = classification_metrics(&probs, &positive, model.threshold)?;
    metrics.bootstrap_se = Some(bootstrap_standard_errors(
        &probs,
        &positive,
        model.threshold,
        config.bootstrap_resamples,
        derive_seed(config.seed, split_seed, 0xb0075),
    )?);
    let run = VariantRun { split_seed, n_train, n_test: test.len(), selected_c: model.c, metrics };
    Ok((run, probs))
}

/// Everything one split produces for one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub variant: DatasetVariant,
    pub trained: Trained,
    pub run: VariantRun,
    /// Test rows and their probabilities of failure, in dataset order.
    pub test: LabeledDataset,
    pub probs: Vec<f64>,
}

/// Trains and evaluates every variant of the plan on one split.
pub fn run_split(prepared: &Prepared, plan: &ExperimentPlan, config: &RunConfig, split_seed: u64) -> Result<Vec<SplitResult>> {
    let split = prepared.split(config, split_seed)?;
    let scales = prepared.area_scales(&split)?;
    let ctx = prepared.weight_context(&scales, config);
    plan.variants
        .par_iter()
        .map(|&variant| {
            let data = prepared.dataset(variant, &ctx)?;
            let (train_set, test) = data.split(&split);
            let trained = train(&train_set, config, split_seed)?;
            let (run, probs) = evaluate(&trained.model, &test, train_set.len(), config, split_seed)?;
            Ok(SplitResult { variant, trained, run, test, probs })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub auc: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: String,
    pub runs: Vec<VariantRun>,
    /// Mean over split seeds.
    pub mean: MetricSummary,
    /// Sample standard deviation over split seeds (0 with one seed).
    pub sd_over_seeds: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    /// Test AUC of `a` minus that of `b`, per split seed.
    pub auc_differences: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
    /// Absent with fewer than two seeds.
    pub nadeau_bengio: Option<NbTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityBlock {
    pub split_seed: u64,
    pub history_variant: String,
    pub no_history_variant: String,
    pub comparison: ProbabilityComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub split_seeds: Vec<u64>,
    pub reference: String,
    pub variants: Vec<VariantReport>,
    pub comparisons: Vec<Comparison>,
    /// Corrected t-test p-value of every ordered variant pair; `None` on the
    /// diagonal or with fewer than two seeds.
    pub nb_p_matrix: Vec<Vec<Option<f64>>>,
    pub probability_comparisons: Vec<ProbabilityBlock>,
}

fn summarize(runs: &[VariantRun]) -> (MetricSummary, MetricSummary) {
    let mean_sd = |f: fn(&MetricsReport) -> f64| {
        let v: Vec<f64> = runs.iter().map(|r| f(&r.metrics)).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        (mean, sd)
    };
    let auc = mean_sd(|m| m.auc);
    let accuracy = mean_sd(|m| m.accuracy);
    let recall = mean_sd(|m| m.recall);
    let specificity = mean_sd(|m| m.specificity);
    (
        MetricSummary { auc: auc.0, accuracy: accuracy.0, recall: recall.0, specificity: specificity.0 },
        MetricSummary { auc: auc.1, accuracy: accuracy.1, recall: recall.1, specificity: specificity.1 },
    )
}

fn compare(a: &[VariantRun], b: &[VariantRun]) -> Result<(Vec<f64>, usize, usize, Option<NbTestResult>)> {
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.metrics.auc - y.metrics.auc).collect();
    let n_train = a.iter().map(|r| r.n_train).sum::<usize>() / a.len().max(1);
    let n_test = a.iter().map(|r| r.n_test).sum::<usize>() / a.len().max(1);
    let nb = if diffs.len() >= 2 { Some(nadeau_bengio_test(&diffs, n_train, n_test)?) } else { None };
    Ok((diffs, n_train, n_test, nb))
}

/// Variant paired with the reference in the probability comparison: same
/// scope, no history, binary encoding.
pub fn no_history_counterpart(reference: DatasetVariant) -> DatasetVariant {
    DatasetVariant { history: HistoryMode::NoHistory, encoding: Encoding::Binary, ..reference }
}

/// Per-split inputs of the report.
pub struct SplitOutputs<'a> {
    pub split_seed: u64,
    pub runs: BTreeMap<DatasetVariant, &'a VariantRun>,
    pub tests: BTreeMap<DatasetVariant, (&'a [Row], &'a [f64])>,
}

pub fn build_report(plan: &ExperimentPlan, reference: DatasetVariant, splits: &[SplitOutputs<'_>]) -> Result<Report> {
    let runs_of = |v: DatasetVariant| -> Vec<VariantRun> { splits.iter().map(|s| s.runs[&v].clone()).collect() };
    let variants: Vec<VariantReport> = plan
        .variants
        .iter()
        .map(|&v| {
            let runs = runs_of(v);
            let (mean, sd_over_seeds) = summarize(&runs);
            VariantReport { variant: v.to_string(), runs, mean, sd_over_seeds }
        })
        .collect();
    let mut comparisons = Vec::new();
    for &(a, b) in &plan.comparisons {
        let (auc_differences, n_train, n_test, nadeau_bengio) = compare(&runs_of(a), &runs_of(b))?;
        comparisons.push(Comparison { a: a.to_string(), b: b.to_string(), auc_differences, n_train, n_test, nadeau_bengio });
    }
    let mut nb_p_matrix = Vec::new();
    for &a in &plan.variants {
        let mut row = Vec::new();
        for &b in &plan.variants {
            let p = if a == b { None } else { compare(&runs_of(a), &runs_of(b))?.3.map(|r| r.p_value) };
            row.push(p);
        }
        nb_p_matrix.push(row);
    }
    let mut probability_comparisons = Vec::new();
    let counterpart = no_history_counterpart(reference);
    for s in splits {
        let (Some(&(h_rows, h_probs)), Some(&(nh_rows, nh_probs))) = (s.tests.get(&reference), s.tests.get(&counterpart)) else {
            continue;
        };
        let nh_by_therapy: BTreeMap<&str, f64> =
            nh_rows.iter().zip(nh_probs).map(|(r, &p)| (r.therapy_id.as_str(), p)).collect();
        let mut h_success = Vec::new();
        let mut nh_success = Vec::new();
        let mut outcomes = Vec::new();
        let mut with_history = Vec::new();
        for (r, &p) in h_rows.iter().zip(h_probs) {
            if let Some(&q) = nh_by_therapy.get(r.therapy_id.as_str()) {
                h_success.push(1.0 - p);
                nh_success.push(1.0 - q);
                outcomes.push(r.label);
                with_history.push(r.has_prior_history);
            }
        }
        let comparison = compare_probability_distributions(&h_success, &nh_success, &outcomes, &with_history)?;
        probability_comparisons.push(ProbabilityBlock {
            split_seed: s.split_seed,
            history_variant: reference.to_string(),
            no_history_variant: counterpart.to_string(),
            comparison,
        });
    }
    Ok(Report {
        split_seeds: splits.iter().map(|s| s.split_seed).collect(),
        reference: reference.to_string(),
        variants,
        comparisons,
        nb_p_matrix,
        probability_comparisons,
    })
}

/// The whole protocol in memory.
pub fn run_experiment(prepared: &Prepared, plan: &ExperimentPlan, config: &RunConfig) -> Result<(Report, Vec<Vec<SplitResult>>)> {
    let results: Vec<Vec<SplitResult>> =
        plan.seeds.par_iter().map(|&s| run_split(prepared, plan, config, s)).collect::<Result<_>>()?;
    let outputs: Vec<SplitOutputs<'_>> = plan
        .seeds
        .iter()
        .zip(&results)
        .map(|(&split_seed, rs)| SplitOutputs {
            split_seed,
            runs: rs.iter().map(|r| (r.variant, &r.run)).collect(),
            tests: rs.iter().map(|r| (r.variant, (r.test.rows.as_slice(), r.probs.as_slice()))).collect(),
        })
        .collect();
    let report = build_report(plan, config.reference, &outputs)?;
    Ok((report, results))
}

/// Composite ranking of a trained model and the elbow of its scree curve.
pub fn rank(model: &SvmModel, training: &LabeledDataset, config: &RunConfig) -> Result<(Vec<RankingEntry>, usize)> {
    let entries = composite_ranking(&model.w, &training.universe, &training.rows, config.sum_over_all_rows)?;
    let scree: Vec<f64> = entries.iter().map(|e| e.ranking_value.abs()).collect();
    let elbow = if scree.len() >= 3 { elbow_select(&scree)? } else { scree.len() };
    Ok((entries, elbow))
}
