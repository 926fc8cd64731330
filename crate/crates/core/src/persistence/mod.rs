//! Disappearance curves of mutations after drug pressure stops.
//!
//! For every drug class except NRTI, off-class gaps following an on-class
//! therapy yield (days since stop, still present?) observations per
//! mutation. Each mutation with informative data gets its own maximum
//! likelihood sigmoid; the fitted (alpha, beta) pairs are clustered and the
//! clusters, or the range they span, stand in for mutations without a usable
//! fit.

pub mod kmeans;
pub mod sigmoid;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cohort::{Cohort, PatientRecord, StanfordScoreTable};
use crate::domain::{Day, DrugClass, Gene, MutationId};
pub use kmeans::{cluster_params, Clustering, KMeansOptions, Standardization};
pub use sigmoid::{fit_sigmoid_nll, sigmoid_nll, Interval, SigmoidSolution};

pub const ALPHA_BOUNDS: Interval = Interval { lo: -20.0, hi: 20.0 };
pub const BETA_BOUNDS: Interval = Interval { lo: 0.0, hi: 1.0 };
pub const DEFAULT_K: usize = 3;

/// Presence of one mutation in the genotypes sampled during one off-class
/// gap. `x` holds days since the class was stopped and is strictly
/// increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub patient_id: String,
    pub x: Vec<u32>,
    pub y: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersistenceObservations {
    pub mutation: MutationId,
    pub episodes: Vec<Episode>,
}

impl PersistenceObservations {
    pub fn len(&self) -> usize {
        self.episodes.iter().map(|e| e.x.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pooled (x, target) vectors with target 1 for present and 0 for absent.
    pub fn flatten(&self) -> (Vec<f64>, Vec<f64>) {
        let x = self.episodes.iter().flat_map(|e| e.x.iter().map(|&v| v as f64)).collect();
        let t = self.episodes.iter().flat_map(|e| e.y.iter().map(|&p| if p { 1.0 } else { 0.0 })).collect();
        (x, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Provenance {
    Fitted,
    ClusterCentroid,
    Hyperparameter,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Fitted => "fitted",
            Provenance::ClusterCentroid => "cluster_centroid",
            Provenance::Hyperparameter => "hyperparameter",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SigmoidParams {
    pub alpha: f64,
    pub beta: f64,
    pub provenance: Provenance,
}

impl SigmoidParams {
    /// Probability that the mutation is still detectable `t` days after
    /// pressure stopped.
    pub fn persistence(&self, t: f64) -> f64 {
        crate::math::decreasing_sigmoid(self.alpha + self.beta * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FitError {
    #[error("need at least two observations with both outcomes")]
    Degenerate,
}

/// Maximum likelihood fit over the default box.
pub fn fit_sigmoid(obs: &PersistenceObservations) -> Result<SigmoidSolution, FitError> {
    let (x, t) = obs.flatten();
    fit_presence(&x, &t)
}

/// Fits pooled (x, target) vectors, rejecting data without both outcomes.
pub fn fit_presence(x: &[f64], t: &[f64]) -> Result<SigmoidSolution, FitError> {
    let ones = t.iter().filter(|&&v| v == 1.0).count();
    if x.len() < 2 || ones == 0 || ones == t.len() {
        return Err(FitError::Degenerate);
    }
    Ok(fit_sigmoid_nll(x, t, ALPHA_BOUNDS, BETA_BOUNDS))
}

/// Drug class a mutation is attributed to.
///
/// PR and IN mutations belong to PI and INI. An RT mutation is attributed to
/// NRTI when the score table lists it as resisting some NRTI and no NNRTI,
/// and to NNRTI otherwise.
pub fn attributed_class(mutation: MutationId, table: &StanfordScoreTable) -> DrugClass {
    match mutation.gene {
        Gene::PR => DrugClass::PI,
        Gene::IN => DrugClass::INI,
        Gene::RT => {
            let mut nrti = false;
            let mut nnrti = false;
            for (drug, score) in table.scores_for(mutation) {
                if score > 0 {
                    match drug.class() {
                        DrugClass::NRTI => nrti = true,
                        DrugClass::NNRTI => nnrti = true,
                        _ => {}
                    }
                }
            }
            if nrti && !nnrti {
                DrugClass::NRTI
            } else {
                DrugClass::NNRTI
            }
        }
    }
}

/// Maximal periods during which the patient takes a drug of `class`.
pub fn on_class_periods(patient: &PatientRecord, class: DrugClass) -> Vec<(Day, Day)> {
    let mut spans: Vec<(Day, Day)> = patient
        .therapies
        .iter()
        .filter(|t| t.has_class(class))
        .map(|t| (t.start, patient.effective_end(t)))
        .collect();
    spans.sort();
    let mut merged: Vec<(Day, Day)> = Vec::new();
    for (s, e) in spans {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}

/// Collects the off-class observations of every mutation attributed to
/// `class` by `attribution`.
pub fn extract_observations(
    cohort: &Cohort,
    class: DrugClass,
    attribution: impl Fn(MutationId) -> DrugClass,
) -> BTreeMap<MutationId, PersistenceObservations> {
    let mut out: BTreeMap<MutationId, PersistenceObservations> = BTreeMap::new();
    for patient in cohort.patients() {
        let periods = on_class_periods(patient, class);
        let last_event = patient.last_event();
        for (i, &(start, stop)) in periods.iter().enumerate() {
            let next_start = periods.get(i + 1).map(|p| p.0);
            let in_gap = |d: Day| {
                d > stop
                    && match next_start {
                        Some(n) => d < n,
                        None => last_event.is_some_and(|l| d <= l),
                    }
            };
            let gap: Vec<_> = patient.genotypes.iter().filter(|g| in_gap(g.sample_date)).collect();
            if gap.is_empty() {
                continue;
            }
            let mut selected: Vec<MutationId> = patient
                .genotypes
                .iter()
                .filter(|g| g.sample_date >= start && g.sample_date <= stop)
                .flat_map(|g| g.mutations.iter().copied())
                .filter(|&m| attribution(m) == class)
                .collect();
            selected.sort();
            selected.dedup();
            for m in selected {
                let episode = Episode {
                    patient_id: patient.id.clone(),
                    x: gap.iter().map(|g| g.sample_date.days_since(stop) as u32).collect(),
                    y: gap.iter().map(|g| g.mutations.contains(&m)).collect(),
                };
                out.entry(m)
                    .or_insert_with(|| PersistenceObservations { mutation: m, episodes: Vec::new() })
                    .episodes
                    .push(episode);
            }
        }
    }
    out
}

/// Box from which hyperparameter curves are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FallbackRange {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl FallbackRange {
    pub fn spanning<'a>(points: impl IntoIterator<Item = &'a (f64, f64)>) -> Option<Self> {
        let mut it = points.into_iter();
        let &(a0, b0) = it.next()?;
        let mut r = FallbackRange { alpha_min: a0, alpha_max: a0, beta_min: b0, beta_max: b0 };
        for &(a, b) in it {
            r.alpha_min = r.alpha_min.min(a);
            r.alpha_max = r.alpha_max.max(a);
            r.beta_min = r.beta_min.min(b);
            r.beta_max = r.beta_max.max(b);
        }
        Some(r)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> (f64, f64) {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        (self.alpha_min + u * (self.alpha_max - self.alpha_min), self.beta_min + v * (self.beta_max - self.beta_min))
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.alpha_min + self.alpha_max), 0.5 * (self.beta_min + self.beta_max))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassModel {
    pub k: usize,
    #[cfg_attr(feature = "serde", serde(rename = "mutations"))]
    pub params: BTreeMap<MutationId, SigmoidParams>,
    /// Sorted cluster centroids in (alpha, beta) coordinates.
    pub centroids: Vec<(f64, f64)>,
    pub standardization: Option<Standardization>,
    pub fallback_range: FallbackRange,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PersistenceModel {
    pub classes: BTreeMap<DrugClass, ClassModel>,
}

impl PersistenceModel {
    pub fn params(&self, mutation: MutationId) -> Option<&SigmoidParams> {
        self.classes.values().find_map(|c| c.params.get(&mutation))
    }

    /// Parameters of a mutation, or the centre of its class's fallback range
    /// when the model has never seen it.
    pub fn params_or_fallback(&self, mutation: MutationId, table: &StanfordScoreTable) -> SigmoidParams {
        if let Some(p) = self.params(mutation) {
            return *p;
        }
        let class = attributed_class(mutation, table);
        let (alpha, beta) = self.classes.get(&class).map(|c| c.fallback_range.center()).unwrap_or((0.0, 0.0));
        SigmoidParams { alpha, beta, provenance: Provenance::Hyperparameter }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceConfig {
    pub k_per_class: BTreeMap<DrugClass, usize>,
    /// Replace fitted curves by their cluster centroid.
    pub use_centroids: bool,
    /// Fallback ranges used when a class has no fitted mutation.
    pub explicit_ranges: BTreeMap<DrugClass, FallbackRange>,
    pub seed: u64,
    pub kmeans_restarts: usize,
    pub kmeans_max_iterations: usize,
}

impl Default for PersistenceConfig {
    fn default() -> Self {
        PersistenceConfig {
            k_per_class: BTreeMap::new(),
            use_centroids: false,
            explicit_ranges: BTreeMap::new(),
            seed: 0,
            kmeans_restarts: kmeans::DEFAULT_RESTARTS,
            kmeans_max_iterations: kmeans::DEFAULT_MAX_ITERATIONS,
        }
    }
}

impl PersistenceConfig {
    pub fn k(&self, class: DrugClass) -> usize {
        self.k_per_class.get(&class).copied().unwrap_or(DEFAULT_K)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PersistenceError {
    #[error("no mutation of class {0} could be fitted; supply explicit alpha/beta bounds for it")]
    MissingFallbackRange(DrugClass),
    #[error(transparent)]
    Cluster(#[from] kmeans::ClusterError),
}

/// Per-mutation diagnostics collected while building the model.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub mutation: MutationId,
    pub class: DrugClass,
    pub observations: usize,
    pub fit: Option<SigmoidSolution>,
}

fn class_seed(seed: u64, class: DrugClass) -> u64 {
    let idx = DrugClass::ALL.iter().position(|&c| c == class).unwrap_or(0) as u64;
    seed ^ (idx + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fits, clusters and fills in curves for every mutation of the cohort.
pub fn build_persistence_model(
    cohort: &Cohort,
    table: &StanfordScoreTable,
    config: &PersistenceConfig,
) -> Result<(PersistenceModel, Vec<FitRecord>), PersistenceError> {
    let mut by_class: BTreeMap<DrugClass, Vec<MutationId>> = BTreeMap::new();
    for m in cohort.observed_mutations() {
        by_class.entry(attributed_class(m, table)).or_default().push(m);
    }
    let attribution = |m: MutationId| attributed_class(m, table);

    let mut classes = BTreeMap::new();
    let mut records = Vec::new();
    let mut pooled_fits: Vec<(f64, f64)> = Vec::new();

    for class in [DrugClass::PI, DrugClass::NNRTI, DrugClass::INI] {
        let observations = extract_observations(cohort, class, attribution);
        let mut fitted: Vec<(MutationId, (f64, f64))> = Vec::new();
        for (m, obs) in &observations {
            let fit = fit_sigmoid(obs).ok();
            if let Some(f) = fit {
                fitted.push((*m, (f.intercept, f.slope)));
            }
            records.push(FitRecord { mutation: *m, class, observations: obs.len(), fit });
        }
        let points: Vec<(f64, f64)> = fitted.iter().map(|f| f.1).collect();
        pooled_fits.extend_from_slice(&points);

        let k = config.k(class);
        let fallback_range = match (FallbackRange::spanning(&points), config.explicit_ranges.get(&class)) {
            (Some(r), _) => r,
            (None, Some(r)) => *r,
            (None, None) => return Err(PersistenceError::MissingFallbackRange(class)),
        };
        let clustering = if points.is_empty() {
            None
        } else {
            let options = KMeansOptions {
                restarts: config.kmeans_restarts,
                max_iterations: config.kmeans_max_iterations,
                seed: class_seed(config.seed, class),
            };
            Some(cluster_params(&points, k.min(points.len()), options)?)
        };

        let mut params = BTreeMap::new();
        for (i, &(m, (alpha, beta))) in fitted.iter().enumerate() {
            let p = match (&clustering, config.use_centroids) {
                (Some(c), true) => {
                    let (a, b) = c.centroids[c.assignments[i]];
                    SigmoidParams { alpha: a, beta: b, provenance: Provenance::ClusterCentroid }
                }
                _ => SigmoidParams { alpha, beta, provenance: Provenance::Fitted },
            };
            params.insert(m, p);
        }

        let default_centroid = clustering.as_ref().map(|c| {
            let z: Vec<(f64, f64)> = c.centroids.iter().map(|&p| c.standardization.forward(p)).collect();
            let n = z.len() as f64;
            let mean = (z.iter().map(|p| p.0).sum::<f64>() / n, z.iter().map(|p| p.1).sum::<f64>() / n);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, p) in z.iter().enumerate() {
                let d = (p.0 - mean.0) * (p.0 - mean.0) + (p.1 - mean.1) * (p.1 - mean.1);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            c.centroids[best]
        });

        let mut rng = ChaCha8Rng::seed_from_u64(class_seed(config.seed, class).wrapping_add(1));
        for &m in by_class.get(&class).map(Vec::as_slice).unwrap_or(&[]) {
            if params.contains_key(&m) {
                continue;
            }
            let observed = observations.get(&m).is_some_and(|o| !o.is_empty());
            let p = match default_centroid {
                Some((alpha, beta)) if observed => SigmoidParams { alpha, beta, provenance: Provenance::ClusterCentroid },
                _ => {
                    let (alpha, beta) = fallback_range.sample(&mut rng);
                    SigmoidParams { alpha, beta, provenance: Provenance::Hyperparameter }
                }
            };
            params.insert(m, p);
        }

        classes.insert(
            class,
            ClassModel {
                k,
                params,
                centroids: clustering.as_ref().map(|c| c.centroids.clone()).unwrap_or_default(),
                standardization: clustering.map(|c| c.standardization),
                fallback_range,
            },
        );
    }

    let nrti_range = match (config.explicit_ranges.get(&DrugClass::NRTI), FallbackRange::spanning(&pooled_fits)) {
        (Some(r), _) => *r,
        (None, Some(r)) => r,
        (None, None) => return Err(PersistenceError::MissingFallbackRange(DrugClass::NRTI)),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(class_seed(config.seed, DrugClass::NRTI).wrapping_add(1));
    let mut params = BTreeMap::new();
    for &m in by_class.get(&DrugClass::NRTI).map(Vec::as_slice).unwrap_or(&[]) {
        let (alpha, beta) = nrti_range.sample(&mut rng);
        params.insert(m, SigmoidParams { alpha, beta, provenance: Provenance::Hyperparameter });
    }
    classes.insert(
        DrugClass::NRTI,
        ClassModel {
            k: config.k(DrugClass::NRTI),
            params,
            centroids: Vec::new(),
            standardization: None,
            fallback_range: nrti_range,
        },
    );
    Ok((PersistenceModel { classes }, records))
}
