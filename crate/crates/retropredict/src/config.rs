//! Key-value configuration files.
//!
//! One `key = value` pair per line; blank lines and lines starting with `#`
//! are ignored. Lists are comma-separated. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use retropredict_core::domain::DrugClass;
use retropredict_core::features::{DatasetVariant, STANDARD_VARIANTS};
use retropredict_core::learner::{CvConfig, SvmOptions};
use retropredict_core::persistence::{FallbackRange, PersistenceConfig};

use crate::error::{Error, Result};
use crate::synth::SynthConfig;

/// Raw pairs of a config file; each typed section takes the keys it knows.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config { line: i + 1, message: format!("expected `key = value`, got `{line}`") });
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config { line: i + 1, message: "empty key".into() });
            }
            if entries.insert(key.clone(), (i + 1, value.trim().to_string())).is_some() {
                return Err(Error::Config { line: i + 1, message: format!("duplicate key `{key}`") });
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read configuration {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, value)) => value
                .parse()
                .map(Some)
                .map_err(|e| Error::Config { line, message: format!("`{key}`: {e}") }),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, value)) => value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|e| Error::Config { line, message: format!("`{key}`: {e}") }))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Fails on the first key nobody consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => Err(Error::Config { line, message: format!("unknown key `{key}`") }),
        }
    }
}

/// Everything the pipeline needs besides the cohort itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Directory holding the cohort files; a synthetic cohort is generated
    /// when absent.
    pub cohort_dir: Option<PathBuf>,
    pub assay_floor: f64,
    pub seed: u64,
    /// One train/test split, and one trained model per variant, per seed.
    pub split_seeds: Vec<u64>,
    pub train_fraction: f64,
    pub variants: Vec<DatasetVariant>,
    /// Variant every other one is compared against.
    pub reference: DatasetVariant,
    /// Variant whose models are ranked.
    pub rank_variant: DatasetVariant,
    pub k_per_class: BTreeMap<DrugClass, usize>,
    pub use_centroids: bool,
    pub explicit_ranges: BTreeMap<DrugClass, FallbackRange>,
    pub kmeans_restarts: usize,
    pub kmeans_max_iterations: usize,
    pub same_gene_only: bool,
    pub n_candidates: usize,
    pub folds: usize,
    pub repeats: usize,
    pub log_c_min: f64,
    pub log_c_max: f64,
    pub bh_alpha: f64,
    pub svm_tolerance: f64,
    pub svm_max_epochs: usize,
    pub calibration_folds: usize,
    pub bootstrap_resamples: usize,
    pub sum_over_all_rows: bool,
    pub threads: usize,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cohort_dir: None,
            assay_floor: retropredict_core::cohort::DEFAULT_ASSAY_FLOOR,
            seed: 7,
            split_seeds: (0..5).collect(),
            train_fraction: 0.75,
            variants: STANDARD_VARIANTS.to_vec(),
            reference: STANDARD_VARIANTS[0],
            rank_variant: STANDARD_VARIANTS[0],
            k_per_class: BTreeMap::new(),
            use_centroids: false,
            explicit_ranges: BTreeMap::new(),
            kmeans_restarts: retropredict_core::persistence::kmeans::DEFAULT_RESTARTS,
            kmeans_max_iterations: retropredict_core::persistence::kmeans::DEFAULT_MAX_ITERATIONS,
            same_gene_only: false,
            n_candidates: 60,
            folds: 5,
            repeats: 5,
            log_c_min: -14.0,
            log_c_max: 0.0,
            bh_alpha: 0.05,
            svm_tolerance: 1e-6,
            svm_max_epochs: 2000,
            calibration_folds: 5,
            bootstrap_resamples: 1000,
            sum_over_all_rows: false,
            threads: 0,
            synth: SynthConfig::default(),
        }
    }
}

fn parse_range(line: usize, key: &str, value: &[f64]) -> Result<FallbackRange> {
    match *value {
        [alpha_min, alpha_max, beta_min, beta_max] if alpha_min <= alpha_max && beta_min <= beta_max => {
            Ok(FallbackRange { alpha_min, alpha_max, beta_min, beta_max })
        }
        _ => Err(Error::Config { line, message: format!("`{key}` needs alpha_min, alpha_max, beta_min, beta_max") }),
    }
}

impl RunConfig {
    pub fn from_key_values(mut kv: KeyValues) -> Result<Self> {
        let d = RunConfig::default();
        let mut c = RunConfig {
            cohort_dir: kv.take("cohort_dir")?,
            assay_floor: kv.take_or("assay_floor", d.assay_floor)?,
            seed: kv.take_or("seed", d.seed)?,
            split_seeds: d.split_seeds.clone(),
            train_fraction: kv.take_or("train_fraction", d.train_fraction)?,
            variants: kv.take_list("variants")?.unwrap_or(d.variants),
            reference: kv.take_or("reference_variant", d.reference)?,
            rank_variant: kv.take_or("rank_variant", d.rank_variant)?,
            k_per_class: BTreeMap::new(),
            use_centroids: kv.take_or("use_centroids", d.use_centroids)?,
            explicit_ranges: BTreeMap::new(),
            kmeans_restarts: kv.take_or("kmeans_restarts", d.kmeans_restarts)?,
            kmeans_max_iterations: kv.take_or("kmeans_max_iterations", d.kmeans_max_iterations)?,
            same_gene_only: kv.take_or("min_over_same_gene_class_only", d.same_gene_only)?,
            n_candidates: kv.take_or("n_candidates", d.n_candidates)?,
            folds: kv.take_or("folds", d.folds)?,
            repeats: kv.take_or("repeats", d.repeats)?,
            log_c_min: kv.take_or("log_c_min", d.log_c_min)?,
            log_c_max: kv.take_or("log_c_max", d.log_c_max)?,
            bh_alpha: kv.take_or("bh_alpha", d.bh_alpha)?,
            svm_tolerance: kv.take_or("svm_tolerance", d.svm_tolerance)?,
            svm_max_epochs: kv.take_or("svm_max_epochs", d.svm_max_epochs)?,
            calibration_folds: kv.take_or("calibration_folds", d.calibration_folds)?,
            bootstrap_resamples: kv.take_or("bootstrap_resamples", d.bootstrap_resamples)?,
            sum_over_all_rows: kv.take_or("sum_over_all_rows", d.sum_over_all_rows)?,
            threads: kv.take_or("threads", d.threads)?,
            synth: SynthConfig::default(),
        };
        let runs: Option<u64> = kv.take("runs")?;
        match (kv.take_list::<u64>("split_seeds")?, runs) {
            (Some(seeds), _) => c.split_seeds = seeds,
            (None, Some(n)) => c.split_seeds = (0..n).collect(),
            (None, None) => {}
        }
        for class in DrugClass::ALL {
            if let Some(k) = kv.take::<usize>(&format!("k_{class}"))? {
                c.k_per_class.insert(class, k);
            }
            let key = format!("fallback_range_{class}");
            let line = kv.entries.get(&key).map(|e| e.0).unwrap_or(0);
            if let Some(values) = kv.take_list::<f64>(&key)? {
                c.explicit_ranges.insert(class, parse_range(line, &key, &values)?);
            }
        }
        c.synth = SynthConfig::from_key_values(&mut kv)?;
        c.synth.seed = c.seed;
        kv.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_key_values(KeyValues::load(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Usage(format!("invalid configuration: {m}")));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        if self.variants.is_empty() {
            return bad("at least one variant is required");
        }
        if self.split_seeds.is_empty() {
            return bad("at least one split seed is required");
        }
        if self.n_candidates == 0 || self.folds < 2 || self.repeats == 0 || self.calibration_folds < 2 {
            return bad("n_candidates, repeats must be positive and folds, calibration_folds at least 2");
        }
        if !(self.log_c_min <= self.log_c_max) {
            return bad("log_c_min must not exceed log_c_max");
        }
        if !(self.assay_floor > 0.0) {
            return bad("assay_floor must be positive");
        }
        Ok(())
    }

    pub fn persistence(&self) -> PersistenceConfig {
        PersistenceConfig {
            k_per_class: self.k_per_class.clone(),
            use_centroids: self.use_centroids,
            explicit_ranges: self.explicit_ranges.clone(),
            seed: self.seed,
            kmeans_restarts: self.kmeans_restarts,
            kmeans_max_iterations: self.kmeans_max_iterations,
        }
    }

    pub fn svm(&self) -> SvmOptions {
        SvmOptions { tolerance: self.svm_tolerance, max_epochs: self.svm_max_epochs, ..SvmOptions::default() }
    }

    /// Cross-validation settings for one split seed.
    pub fn cv(&self, split_seed: u64) -> CvConfig {
        CvConfig {
            n_candidates: self.n_candidates,
            folds: self.folds,
            repeats: self.repeats,
            log_c_min: self.log_c_min,
            log_c_max: self.log_c_max,
            alpha: self.bh_alpha,
            seed: derive_seed(self.seed, split_seed, 0xc5),
            svm: self.svm(),
            ..CvConfig::default()
        }
    }

    /// Canonical text of every setting that influences training, hashed into
    /// model files.
    pub fn training_fingerprint(&self, variant: DatasetVariant, split_seed: u64) -> String {
        use sha2::{Digest, Sha256};
        let text = format!(
            "variant={variant};seed={};split_seed={split_seed};train_fraction={};n_candidates={};folds={};repeats={};\
             log_c=[{},{}];bh_alpha={};svm_tolerance={};svm_max_epochs={};calibration_folds={};same_gene_only={};\
             use_centroids={};assay_floor={}",
            self.seed,
            self.train_fraction,
            self.n_candidates,
            self.folds,
            self.repeats,
            self.log_c_min,
            self.log_c_max,
            self.bh_alpha,
            self.svm_tolerance,
            self.svm_max_epochs,
            self.calibration_folds,
            self.same_gene_only,
            self.use_centroids,
            self.assay_floor,
        );
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Mixes a base seed with a sub-stream index and a purpose tag.
pub fn derive_seed(base: u64, stream: u64, tag: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
