//! Dataset variants: which therapies, which mutations, and how they are
//! encoded.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cohort::{Cohort, Eligibility, StanfordScoreTable};
use crate::domain::{Day, DrugId, MutationId, Outcome, PatientTherapyPair};
use crate::persistence::PersistenceModel;
use crate::weighting::{mutation_weight, stanford_component, vl_area, AreaScales, WeightError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Scope {
    /// Every eligible therapy.
    Full,
    /// Only therapies preceded by more than one genotype.
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum HistoryMode {
    /// Mutations from every genotype before the therapy.
    History,
    /// Mutations from the latest genotype before the therapy.
    NoHistory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Encoding {
    Weighted,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetVariant {
    pub scope: Scope,
    pub history: HistoryMode,
    pub encoding: Encoding,
}

impl DatasetVariant {
    pub const fn new(scope: Scope, history: HistoryMode, encoding: Encoding) -> Self {
        DatasetVariant { scope, history, encoding }
    }

    /// All eight combinations.
    pub fn all() -> Vec<DatasetVariant> {
        let mut out = Vec::new();
        for scope in [Scope::Full, Scope::Partial] {
            for history in [HistoryMode::History, HistoryMode::NoHistory] {
                for encoding in [Encoding::Weighted, Encoding::Binary] {
                    out.push(DatasetVariant { scope, history, encoding });
                }
            }
        }
        out
    }
}

/// The six configurations compared in the experiments: the four full-scope
/// variants and the two partial-scope ones.
pub const STANDARD_VARIANTS: [DatasetVariant; 6] = [
    DatasetVariant::new(Scope::Full, HistoryMode::History, Encoding::Weighted),
    DatasetVariant::new(Scope::Full, HistoryMode::History, Encoding::Binary),
    DatasetVariant::new(Scope::Full, HistoryMode::NoHistory, Encoding::Weighted),
    DatasetVariant::new(Scope::Full, HistoryMode::NoHistory, Encoding::Binary),
    DatasetVariant::new(Scope::Partial, HistoryMode::History, Encoding::Weighted),
    DatasetVariant::new(Scope::Partial, HistoryMode::NoHistory, Encoding::Binary),
];

impl fmt::Display for DatasetVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scope = match self.scope {
            Scope::Full => "Full",
            Scope::Partial => "Partial",
        };
        let history = match self.history {
            HistoryMode::History => "History",
            HistoryMode::NoHistory => "No-history",
        };
        let encoding = match self.encoding {
            Encoding::Weighted => "Weighted",
            Encoding::Binary => "Non-weighted",
        };
        write!(f, "{scope}_{history}_{encoding}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown dataset variant `{0}`")]
pub struct UnknownVariant(pub String);

impl FromStr for DatasetVariant {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric() || *c == '_').collect::<String>().to_ascii_lowercase();
        let parts: Vec<&str> = norm.split('_').collect();
        let err = || UnknownVariant(String::from(s));
        let [scope, history, encoding] = parts.as_slice() else {
            return Err(err());
        };
        let scope = match *scope {
            "full" => Scope::Full,
            "partial" => Scope::Partial,
            _ => return Err(err()),
        };
        let history = match *history {
            "history" => HistoryMode::History,
            "nohistory" => HistoryMode::NoHistory,
            _ => return Err(err()),
        };
        let encoding = match *encoding {
            "weighted" => Encoding::Weighted,
            "nonweighted" | "binary" => Encoding::Binary,
            _ => return Err(err()),
        };
        Ok(DatasetVariant { scope, history, encoding })
    }
}

/// Sparse feature vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SparseVector(pub Vec<(u32, f64)>);

impl SparseVector {
    /// Builds a vector from unsorted entries; duplicate indices are summed
    /// and exact zeros dropped.
    pub fn from_entries(mut entries: Vec<(u32, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut out: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => out.push((i, v)),
            }
        }
        out.retain(|e| e.1 != 0.0);
        SparseVector(out)
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.0.iter().map(|&(i, v)| v * dense[i as usize]).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.iter().map(|e| e.1 * e.1).sum()
    }

    pub fn get(&self, index: u32) -> f64 {
        self.0.binary_search_by_key(&index, |e| e.0).map(|p| self.0[p].1).unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(u32, f64)> {
        self.0.iter()
    }

    pub fn nnz(&self) -> usize {
        self.0.len()
    }

    pub fn scaled(&self, c: f64) -> SparseVector {
        SparseVector(self.0.iter().map(|&(i, v)| (i, v * c)).collect())
    }
}

/// Feature index layout: the mutation block followed by the drug block.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureUniverse {
    pub mutations: Vec<MutationId>,
    pub drugs: Vec<DrugId>,
}

impl FeatureUniverse {
    /// Mutations and drugs appearing in any of the given pairs.
    pub fn from_pairs(pairs: &[PatientTherapyPair]) -> Self {
        let mutations: BTreeSet<MutationId> = pairs.iter().flat_map(|p| p.history_mutations.keys().copied()).collect();
        let drugs: BTreeSet<DrugId> = pairs.iter().flat_map(|p| p.therapy.drugs.iter().copied()).collect();
        FeatureUniverse { mutations: mutations.into_iter().collect(), drugs: drugs.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.mutations.len() + self.drugs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mutation_index(&self, m: MutationId) -> Option<u32> {
        self.mutations.binary_search(&m).ok().map(|i| i as u32)
    }

    pub fn drug_index(&self, d: DrugId) -> Option<u32> {
        self.drugs.binary_search(&d).ok().map(|i| (self.mutations.len() + i) as u32)
    }

    pub fn is_mutation(&self, index: u32) -> bool {
        (index as usize) < self.mutations.len()
    }

    /// Column name of a feature index.
    pub fn name(&self, index: u32) -> String {
        use alloc::string::ToString;
        let i = index as usize;
        if i < self.mutations.len() {
            self.mutations[i].to_string()
        } else {
            String::from(self.drugs[i - self.mutations.len()].code())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Row {
    pub therapy_id: String,
    pub patient_id: String,
    pub label: Outcome,
    pub has_prior_history: bool,
    pub features: SparseVector,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabeledDataset {
    pub variant: DatasetVariant,
    pub universe: FeatureUniverse,
    pub rows: Vec<Row>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<Outcome> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn patients(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.patient_id.as_str()).collect()
    }

    /// Rows whose patient satisfies `keep`, in the original order.
    pub fn filter_patients(&self, keep: impl Fn(&str) -> bool) -> LabeledDataset {
        LabeledDataset {
            variant: self.variant,
            universe: self.universe.clone(),
            rows: self.rows.iter().filter(|r| keep(&r.patient_id)).cloned().collect(),
        }
    }

    pub fn split(&self, split: &PatientSplit) -> (LabeledDataset, LabeledDataset) {
        (self.filter_patients(|p| split.train.contains(p)), self.filter_patients(|p| split.test.contains(p)))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("the dataset has no rows")]
    Empty,
    #[error("a patient split needs at least two patients, got {0}")]
    TooFewPatients(usize),
    #[error("patient `{0}` not in cohort")]
    UnknownPatient(String),
    #[error("therapy `{therapy}`: {source}")]
    Weight { therapy: String, source: WeightError },
}

/// Builds the history of every eligible therapy.
pub fn build_pairs(eligibility: &Eligibility<'_>) -> Vec<PatientTherapyPair> {
    let mut out = Vec::with_capacity(eligibility.accepted.len());
    for e in &eligibility.accepted {
        let Some(outcome) = e.label.outcome() else { continue };
        let prior = e.patient.genotypes_before(e.therapy.start);
        let Some(last) = prior.last() else { continue };
        let mut history = BTreeMap::new();
        for g in prior {
            for &m in &g.mutations {
                history.insert(m, g.sample_date);
            }
        }
        out.push(PatientTherapyPair {
            therapy: e.therapy.clone(),
            history_mutations: history,
            baseline_mutations: last.mutations.clone(),
            baseline_date: last.sample_date,
            label: outcome,
            has_prior_history: prior.len() > 1,
        });
    }
    out
}

/// Mutations of a pair under a history mode, with the date each was last
/// seen.
pub fn pair_mutations(pair: &PatientTherapyPair, history: HistoryMode) -> Vec<(MutationId, Day)> {
    match history {
        HistoryMode::History => pair.history_mutations.iter().map(|(&m, &d)| (m, d)).collect(),
        HistoryMode::NoHistory => pair.baseline_mutations.iter().map(|&m| (m, pair.baseline_date)).collect(),
    }
}

/// Inputs for weighted encodings.
#[derive(Debug, Clone, Copy)]
pub struct WeightContext<'a> {
    pub persistence: &'a PersistenceModel,
    pub table: &'a StanfordScoreTable,
    pub scales: &'a AreaScales,
    /// Restrict the score minimum to drugs targeting the mutation's gene.
    pub same_gene_only: bool,
}

/// One weighted mutation occurrence, kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRecord {
    pub therapy_id: String,
    pub mutation: MutationId,
    pub t_days: u32,
    pub raw_area: f64,
    pub normalized_area: f64,
    pub stanford: f64,
    pub weight: f64,
}

fn raw_area(cohort: &Cohort, patient: &str, date: Day) -> Result<f64, WeightError> {
    let vls = cohort.patient(patient).map(|p| p.viral_loads.as_slice()).unwrap_or(&[]);
    vl_area(vls, date)
}

/// Learns the per-mutation area scales from the occurrences used by the
/// given (training) pairs.
pub fn fit_area_scales(cohort: &Cohort, pairs: &[PatientTherapyPair]) -> Result<AreaScales, FeatureError> {
    let mut raw: Vec<(MutationId, f64)> = Vec::new();
    let mut cache: BTreeMap<(&str, Day), f64> = BTreeMap::new();
    for p in pairs {
        for (&m, &d) in &p.history_mutations {
            let key = (p.therapy.patient_id.as_str(), d);
            let a = match cache.get(&key) {
                Some(&a) => a,
                None => {
                    let a = raw_area(cohort, key.0, d)
                        .map_err(|source| FeatureError::Weight { therapy: p.therapy.therapy_id.clone(), source })?;
                    cache.insert(key, a);
                    a
                }
            };
            raw.push((m, a));
        }
    }
    Ok(AreaScales::fit(raw.iter().map(|(m, a)| (*m, a))))
}

/// Weighted occurrences of one pair.
pub fn weigh_pair(
    cohort: &Cohort,
    pair: &PatientTherapyPair,
    history: HistoryMode,
    ctx: &WeightContext<'_>,
) -> Result<Vec<WeightRecord>, FeatureError> {
    let err = |source| FeatureError::Weight { therapy: pair.therapy.therapy_id.clone(), source };
    let mut out = Vec::new();
    let mut areas: BTreeMap<Day, f64> = BTreeMap::new();
    for (m, seen) in pair_mutations(pair, history) {
        let raw = match areas.get(&seen) {
            Some(&a) => a,
            None => {
                let a = raw_area(cohort, &pair.therapy.patient_id, seen).map_err(err)?;
                areas.insert(seen, a);
                a
            }
        };
        let normalized = ctx.scales.normalize(m, raw);
        let s = stanford_component(m, &pair.therapy.drugs, ctx.table, ctx.same_gene_only);
        let params = ctx.persistence.params_or_fallback(m, ctx.table);
        let t_days = pair.therapy.start.days_since(seen).max(0) as u32;
        let w = mutation_weight(&params, t_days, normalized, s).map_err(err)?;
        out.push(WeightRecord {
            therapy_id: pair.therapy.therapy_id.clone(),
            mutation: m,
            t_days,
            raw_area: raw,
            normalized_area: normalized,
            stanford: s,
            weight: w.value,
        });
    }
    Ok(out)
}

/// Assembles one dataset variant over a fixed feature universe.
///
/// `ctx` is required for weighted encodings and ignored otherwise.
pub fn build_dataset(
    cohort: &Cohort,
    pairs: &[PatientTherapyPair],
    variant: DatasetVariant,
    universe: &FeatureUniverse,
    ctx: Option<&WeightContext<'_>>,
) -> Result<LabeledDataset, FeatureError> {
    let mut rows = Vec::new();
    for pair in pairs {
        if variant.scope == Scope::Partial && !pair.has_prior_history {
            continue;
        }
        let mut entries: Vec<(u32, f64)> = Vec::new();
        match (variant.encoding, ctx) {
            (Encoding::Weighted, Some(ctx)) => {
                for rec in weigh_pair(cohort, pair, variant.history, ctx)? {
                    if let Some(i) = universe.mutation_index(rec.mutation) {
                        entries.push((i, rec.weight));
                    }
                }
            }
            (Encoding::Weighted, None) => panic!("weighted encoding needs a weight context"),
            (Encoding::Binary, _) => {
                for (m, _) in pair_mutations(pair, variant.history) {
                    if let Some(i) = universe.mutation_index(m) {
                        entries.push((i, 1.0));
                    }
                }
            }
        }
        for &d in &pair.therapy.drugs {
            if let Some(i) = universe.drug_index(d) {
                entries.push((i, 1.0));
            }
        }
        rows.push(Row {
            therapy_id: pair.therapy.therapy_id.clone(),
            patient_id: pair.therapy.patient_id.clone(),
            label: pair.label,
            has_prior_history: pair.has_prior_history,
            features: SparseVector::from_entries(entries),
        });
    }
    if rows.is_empty() {
        return Err(FeatureError::Empty);
    }
    Ok(LabeledDataset { variant, universe: universe.clone(), rows })
}

/// Disjoint patient sets of a train/test split.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PatientSplit {
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

/// Shuffles patients and fills the training side until it holds at least
/// `train_fraction` of the rows. At least one patient always goes to test.
///
/// `row_patients` lists the patient of every row.
pub fn split_by_patient<'a>(
    row_patients: impl IntoIterator<Item = &'a str>,
    train_fraction: f64,
    seed: u64,
) -> Result<PatientSplit, FeatureError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut total = 0usize;
    for p in row_patients {
        *counts.entry(p).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(FeatureError::Empty);
    }
    if counts.len() < 2 {
        return Err(FeatureError::TooFewPatients(counts.len()));
    }
    let mut order: Vec<(&str, usize)> = counts.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let target = train_fraction * total as f64;
    let mut split = PatientSplit::default();
    let mut train_rows = 0usize;
    let last = order.len() - 1;
    for (i, (p, n)) in order.into_iter().enumerate() {
        if (train_rows as f64) < target && i < last {
            train_rows += n;
            split.train.insert(String::from(p));
        } else {
            split.test.insert(String::from(p));
        }
    }
    Ok(split)
}
