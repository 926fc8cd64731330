//! File-backed pipeline stages.
//!
//! Every stage reads what earlier stages wrote into the output directory and
//! writes its own files there, so any stage can be rerun on its own. The
//! manifest records which stages completed under which settings; `run-all`
//! skips those and resumes with the first missing one.
//!
//! Output layout:
//!
//! ```text
//! cohort/                       simulated input files (simulate)
//! synth_truth.json              planted generator truth (simulate)
//! ingest.json                   load counters (ingest)
//! labels.tsv                    outcome of every therapy (label)
//! persistence_model.json        curves per class (fit-persistence)
//! persistence_fits.tsv
//! splits/seed-S/split.json      patient split (weights)
//! splits/seed-S/area_scales.json
//! splits/seed-S/weights.tsv
//! splits/seed-S/VARIANT/        dataset.tsv, columns.tsv, rows.tsv (build-datasets),
//!                               model.json (train), predictions.tsv,
//!                               roc_points.tsv, metrics.json (evaluate),
//!                               ranking.tsv, scree.tsv (rank)
//! report.json                   comparison of all variants (evaluate)
//! manifest.json
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use retropredict_core::cohort::{Cohort, StanfordScoreTable};
use retropredict_core::features::{weigh_pair, DatasetVariant, HistoryMode, LabeledDataset, PatientSplit};
use retropredict_core::learner::{CvResult, PlattScaling, Selection, SvmModel};
use retropredict_core::persistence::PersistenceModel;
use retropredict_core::stats::roc_curve;
use retropredict_core::weighting::AreaScales;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiment::{self, build_report, ExperimentPlan, Prepared, Report, SplitOutputs, VariantRun};
use crate::formats::{self, Side};
use crate::ingest::{self, IngestReport};
use crate::json;
use crate::synth::generate_cohort;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub const MODEL_FILE: &str = "model.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const PERSISTENCE_FILE: &str = "persistence_model.json";
pub const SPLIT_FILE: &str = "split.json";
pub const SCALES_FILE: &str = "area_scales.json";
pub const INGEST_FILE: &str = "ingest.json";
pub const TRUTH_FILE: &str = "synth_truth.json";
pub const COHORT_DIR: &str = "cohort";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Simulate,
    Ingest,
    Label,
    FitPersistence,
    Weights,
    BuildDatasets,
    Train,
    Evaluate,
    Rank,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Simulate,
        Stage::Ingest,
        Stage::Label,
        Stage::FitPersistence,
        Stage::Weights,
        Stage::BuildDatasets,
        Stage::Train,
        Stage::Evaluate,
        Stage::Rank,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Ingest => "ingest",
            Stage::Label => "label",
            Stage::FitPersistence => "fit-persistence",
            Stage::Weights => "weights",
            Stage::BuildDatasets => "build-datasets",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Rank => "rank",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| Error::Usage(format!("unknown stage `{s}`")))
    }
}

/// Completed stages and the settings they ran under.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub fingerprint: String,
    pub completed: Vec<Stage>,
}

/// A trained model as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub variant: String,
    pub split_seed: u64,
    pub fingerprint: String,
    pub n_features: usize,
    pub c: f64,
    pub b: f64,
    /// Non-zero coefficients as `(feature index, value)`.
    pub w: Vec<(u32, f64)>,
    pub platt: PlattScaling,
    pub threshold: f64,
    pub cv_results: Vec<CvResult>,
    pub cv_selection: Selection,
}

impl ModelFile {
    pub fn model(&self) -> SvmModel {
        let mut w = vec![0.0; self.n_features];
        for &(j, v) in &self.w {
            if let Some(slot) = w.get_mut(j as usize) {
                *slot = v;
            }
        }
        SvmModel { w, b: self.b, c: self.c, platt: self.platt, threshold: self.threshold }
    }
}

/// A pipeline bound to one output directory and one configuration.
pub struct Pipeline {
    pub out: PathBuf,
    pub config: RunConfig,
}

impl Pipeline {
    pub fn new(out: impl Into<PathBuf>, config: RunConfig) -> Self {
        Pipeline { out: out.into(), config }
    }

    fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out.join(rel)
    }

    fn seed_dir(&self, split_seed: u64) -> PathBuf {
        self.path(format!("splits/seed-{split_seed}"))
    }

    fn variant_dir(&self, split_seed: u64, variant: DatasetVariant) -> PathBuf {
        self.seed_dir(split_seed).join(variant.to_string())
    }

    pub fn cohort_dir(&self) -> PathBuf {
        self.config.cohort_dir.clone().unwrap_or_else(|| self.path(COHORT_DIR))
    }

    /// Hash of every setting except the thread count, which never changes
    /// results.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let config = RunConfig { threads: 0, ..self.config.clone() };
        Sha256::digest(format!("{config:?}").as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let path = self.path(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest { fingerprint: self.fingerprint(), completed: Vec::new() });
        }
        let m: Manifest = json::read(&path)?;
        if m.fingerprint == self.fingerprint() {
            Ok(m)
        } else {
            Ok(Manifest { fingerprint: self.fingerprint(), completed: Vec::new() })
        }
    }

    fn mark(&self, stage: Stage) -> Result<()> {
        let mut m = self.manifest()?;
        m.completed.retain(|&s| s < stage);
        m.completed.push(stage);
        json::write(&self.path(MANIFEST_FILE), &m)
    }

    fn require(&self, path: PathBuf, stage: &'static str) -> Result<PathBuf> {
        if path.exists() {
            Ok(path)
        } else {
            Err(Error::MissingStage { stage, missing: path.display().to_string() })
        }
    }

    fn load_inputs(&self) -> Result<(Cohort, StanfordScoreTable, IngestReport)> {
        ingest::load_dir(&self.cohort_dir(), self.config.assay_floor)
    }

    fn load_prepared(&self, stage: &'static str) -> Result<Prepared> {
        let (cohort, table, _) = self.load_inputs()?;
        let persistence: PersistenceModel = json::read(&self.require(self.path(PERSISTENCE_FILE), stage)?)?;
        Ok(Prepared::new(cohort, table, persistence))
    }

    /// Runs one stage and records it in the manifest.
    pub fn run(&self, stage: Stage) -> Result<()> {
        log::info!("stage {stage}");
        match stage {
            Stage::Simulate => self.simulate()?,
            Stage::Ingest => self.ingest()?,
            Stage::Label => self.label()?,
            Stage::FitPersistence => self.fit_persistence()?,
            Stage::Weights => self.weights()?,
            Stage::BuildDatasets => self.build_datasets()?,
            Stage::Train => self.train()?,
            Stage::Evaluate => {
                self.evaluate()?;
            }
            Stage::Rank => self.rank()?,
        }
        self.mark(stage)
    }

    /// Every stage not yet completed under the current settings, in order.
    /// Simulation is skipped when the configuration names a cohort directory.
    pub fn run_all(&self) -> Result<()> {
        let done = self.manifest()?.completed;
        for stage in Stage::ALL {
            if stage == Stage::Simulate && self.config.cohort_dir.is_some() {
                continue;
            }
            if done.contains(&stage) {
                log::info!("stage {stage} already complete");
                continue;
            }
            self.run(stage)?;
        }
        Ok(())
    }

    fn simulate(&self) -> Result<()> {
        let synth = generate_cohort(&self.config.synth)?;
        ingest::write_cohort(&self.path(COHORT_DIR), &synth.records)?;
        json::write(&self.path(TRUTH_FILE), &synth.truth)
    }

    fn ingest(&self) -> Result<()> {
        let (cohort, _, report) = self.load_inputs()?;
        #[derive(Serialize)]
        struct Summary {
            #[serde(flatten)]
            report: IngestReport,
            therapies: usize,
            observed_mutations: usize,
        }
        let summary =
            Summary { report, therapies: cohort.therapy_count(), observed_mutations: cohort.observed_mutations().len() };
        json::write(&self.path(INGEST_FILE), &summary)
    }

    fn label(&self) -> Result<()> {
        let (cohort, _, _) = self.load_inputs()?;
        formats::write_labels(&self.path(formats::LABELS_FILE), &cohort)
    }

    fn fit_persistence(&self) -> Result<()> {
        let (cohort, table, _) = self.load_inputs()?;
        let (model, fits) = experiment::fit_persistence(&cohort, &table, &self.config)?;
        json::write(&self.path(PERSISTENCE_FILE), &model)?;
        formats::write_fits(&self.path(formats::FITS_FILE), &fits, &model)
    }

    fn weights(&self) -> Result<()> {
        let prepared = self.load_prepared("weights")?;
        for &seed in &self.config.split_seeds {
            let split = prepared.split(&self.config, seed)?;
            let scales = prepared.area_scales(&split)?;
            let ctx = prepared.weight_context(&scales, &self.config);
            let mut records = Vec::new();
            for pair in &prepared.pairs {
                records.extend(weigh_pair(&prepared.cohort, pair, HistoryMode::History, &ctx)?);
            }
            let dir = self.seed_dir(seed);
            json::write(&dir.join(SPLIT_FILE), &split)?;
            json::write(&dir.join(SCALES_FILE), &scales)?;
            formats::write_weights(&dir.join(formats::WEIGHTS_FILE), &records)?;
        }
        Ok(())
    }

    fn load_split(&self, seed: u64, stage: &'static str) -> Result<(PatientSplit, AreaScales)> {
        let dir = self.seed_dir(seed);
        let split = json::read(&self.require(dir.join(SPLIT_FILE), stage)?)?;
        let scales = json::read(&self.require(dir.join(SCALES_FILE), stage)?)?;
        Ok((split, scales))
    }

    fn build_datasets(&self) -> Result<()> {
        let prepared = self.load_prepared("build-datasets")?;
        for &seed in &self.config.split_seeds {
            let (split, scales) = self.load_split(seed, "build-datasets")?;
            let ctx = prepared.weight_context(&scales, &self.config);
            self.config.variants.par_iter().try_for_each(|&variant| {
                let data = prepared.dataset(variant, &ctx)?;
                let side = |r: &retropredict_core::features::Row| {
                    if split.train.contains(&r.patient_id) {
                        Side::Train
                    } else {
                        Side::Test
                    }
                };
                formats::write_dataset(&self.variant_dir(seed, variant), &data, side)
            })?;
        }
        Ok(())
    }

    fn units(&self) -> Vec<(u64, DatasetVariant)> {
        self.config.split_seeds.iter().flat_map(|&s| self.config.variants.iter().map(move |&v| (s, v))).collect()
    }

    /// Training and test rows of one stored dataset.
    pub fn load_dataset(&self, seed: u64, variant: DatasetVariant, stage: &'static str) -> Result<(LabeledDataset, LabeledDataset)> {
        let dir = self.variant_dir(seed, variant);
        self.require(dir.join(formats::ROWS_FILE), stage)?;
        let (data, sides) = formats::read_dataset(&dir, variant)?;
        let pick = |want: Side| LabeledDataset {
            variant,
            universe: data.universe.clone(),
            rows: data.rows.iter().zip(&sides).filter(|(_, &s)| s == want).map(|(r, _)| r.clone()).collect(),
        };
        Ok((pick(Side::Train), pick(Side::Test)))
    }

    pub fn load_model(&self, seed: u64, variant: DatasetVariant, stage: &'static str) -> Result<ModelFile> {
        let path = self.require(self.variant_dir(seed, variant).join(MODEL_FILE), stage)?;
        let file: ModelFile = json::read(&path)?;
        if file.fingerprint != self.config.training_fingerprint(variant, seed) {
            return Err(Error::Format { path, message: "model was trained with different settings; rerun `train`".into() });
        }
        Ok(file)
    }

    fn train(&self) -> Result<()> {
        self.units().into_par_iter().try_for_each(|(seed, variant)| {
            let (train, _) = self.load_dataset(seed, variant, "train")?;
            let trained = experiment::train(&train, &self.config, seed)?;
            let m = &trained.model;
            let file = ModelFile {
                variant: variant.to_string(),
                split_seed: seed,
                fingerprint: self.config.training_fingerprint(variant, seed),
                n_features: m.w.len(),
                c: m.c,
                b: m.b,
                w: m.w.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(j, &v)| (j as u32, v)).collect(),
                platt: m.platt,
                threshold: m.threshold,
                cv_results: trained.cv.results.clone(),
                cv_selection: trained.cv.selection.clone(),
            };
            json::write(&self.variant_dir(seed, variant).join(MODEL_FILE), &file)
        })
    }

    /// Evaluates every stored model and writes the comparison report.
    pub fn evaluate(&self) -> Result<Report> {
        struct Evaluated {
            seed: u64,
            variant: DatasetVariant,
            run: VariantRun,
            test: LabeledDataset,
            probs: Vec<f64>,
        }
        let evaluated: Vec<Evaluated> = self
            .units()
            .into_par_iter()
            .map(|(seed, variant)| {
                let (train, test) = self.load_dataset(seed, variant, "evaluate")?;
                let model = self.load_model(seed, variant, "evaluate")?.model();
                let (run, probs) = experiment::evaluate(&model, &test, train.len(), &self.config, seed)?;
                let dir = self.variant_dir(seed, variant);
                let positive: Vec<bool> = test.rows.iter().map(|r| r.label.as_label() == 1).collect();
                formats::write_predictions(&dir.join(formats::PREDICTIONS_FILE), &test.rows, &probs, model.threshold)?;
                formats::write_roc(&dir.join(formats::ROC_FILE), &roc_curve(&probs, &positive)?)?;
                json::write(&dir.join(METRICS_FILE), &run)?;
                Ok(Evaluated { seed, variant, run, test, probs })
            })
            .collect::<Result<_>>()?;
        let mut by_seed: BTreeMap<u64, Vec<&Evaluated>> = BTreeMap::new();
        for e in &evaluated {
            by_seed.entry(e.seed).or_default().push(e);
        }
        let outputs: Vec<SplitOutputs<'_>> = self
            .config
            .split_seeds
            .iter()
            .map(|seed| {
                let es = &by_seed[seed];
                SplitOutputs {
                    split_seed: *seed,
                    runs: es.iter().map(|e| (e.variant, &e.run)).collect(),
                    tests: es.iter().map(|e| (e.variant, (e.test.rows.as_slice(), e.probs.as_slice()))).collect(),
                }
            })
            .collect();
        let plan = ExperimentPlan::from_config(&self.config);
        let report = build_report(&plan, self.config.reference, &outputs)?;
        json::write(&self.path(REPORT_FILE), &report)?;
        Ok(report)
    }

    fn rank(&self) -> Result<()> {
        let variant = self.config.rank_variant;
        if !self.config.variants.contains(&variant) {
            log::warn!("rank variant {variant} is not among the configured variants; nothing to rank");
            return Ok(());
        }
        for &seed in &self.config.split_seeds {
            let (train, _) = self.load_dataset(seed, variant, "rank")?;
            let model = self.load_model(seed, variant, "rank")?.model();
            let (entries, elbow) = experiment::rank(&model, &train, &self.config)?;
            let dir = self.variant_dir(seed, variant);
            formats::write_ranking(&dir.join(formats::RANKING_FILE), &entries, elbow)?;
            formats::write_scree(&dir.join(formats::SCREE_FILE), &entries, elbow)?;
        }
        Ok(())
    }
}
