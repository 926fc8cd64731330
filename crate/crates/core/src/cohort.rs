//! Validated in-memory cohort, the resistance score table and the
//! eligibility filter that decides which therapies can be modelled.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use libm::{exp, log};

use crate::domain::{Day, DrugId, GenotypeTest, MutationId, Therapy, ViralLoad};
use crate::labeling::{label_therapy, ExclusionReason, OutcomeLabel};

/// Default assay floor in copies/ml.
pub const DEFAULT_ASSAY_FLOOR: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CohortError {
    #[error("record references unknown patient `{0}`")]
    UnknownPatient(String),
    #[error("duplicate therapy id `{0}`")]
    DuplicateTherapy(String),
    #[error("invalid viral load {value} for patient `{patient}`")]
    InvalidViralLoad { patient: String, value: f64 },
}

/// All records of one patient, sorted by date.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    /// Sorted by start date, then therapy id.
    pub therapies: Vec<Therapy>,
    /// Strictly increasing sample dates.
    pub genotypes: Vec<GenotypeTest>,
    /// Strictly increasing dates.
    pub viral_loads: Vec<ViralLoad>,
}

impl PatientRecord {
    /// Date of the latest therapy start, therapy end, genotype or viral load.
    pub fn last_event(&self) -> Option<Day> {
        let t = self.therapies.iter().flat_map(|t| [Some(t.start), t.end]).flatten();
        let g = self.genotypes.iter().map(|g| g.sample_date);
        let v = self.viral_loads.iter().map(|v| v.date);
        t.chain(g).chain(v).max()
    }

    /// End date used for interval arithmetic. A missing end means the therapy
    /// runs until the next therapy starts or, failing that, until the last
    /// recorded event.
    pub fn effective_end(&self, therapy: &Therapy) -> Day {
        if let Some(end) = therapy.end {
            return end;
        }
        let next_start = self.therapies.iter().map(|t| t.start).filter(|&s| s > therapy.start).min();
        let fallback = next_start.or_else(|| self.last_event()).unwrap_or(therapy.start);
        fallback.max(therapy.start)
    }

    /// Genotypes sampled strictly before `day`.
    pub fn genotypes_before(&self, day: Day) -> &[GenotypeTest] {
        let n = self.genotypes.partition_point(|g| g.sample_date < day);
        &self.genotypes[..n]
    }
}

/// Immutable, validated cohort indexed by patient id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cohort {
    patients: BTreeMap<String, PatientRecord>,
}

/// Counters reported while building a cohort.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub clamped_viral_loads: usize,
    pub merged_genotypes: usize,
    pub merged_viral_loads: usize,
}

impl Cohort {
    pub fn patient(&self, id: &str) -> Option<&PatientRecord> {
        self.patients.get(id)
    }

    pub fn patients(&self) -> impl Iterator<Item = &PatientRecord> {
        self.patients.values()
    }

    pub fn patient_count(&self) -> usize {
        self.patients.len()
    }

    /// All therapies ordered by patient id, then start date.
    pub fn therapies(&self) -> impl Iterator<Item = (&PatientRecord, &Therapy)> {
        self.patients.values().flat_map(|p| p.therapies.iter().map(move |t| (p, t)))
    }

    pub fn therapy_count(&self) -> usize {
        self.patients.values().map(|p| p.therapies.len()).sum()
    }

    /// Every mutation observed in any genotype, in canonical order.
    pub fn observed_mutations(&self) -> BTreeSet<MutationId> {
        self.patients
            .values()
            .flat_map(|p| p.genotypes.iter().flat_map(|g| g.mutations.iter().copied()))
            .collect()
    }
}

/// Accumulates raw records and produces a [`Cohort`].
#[derive(Debug, Clone)]
pub struct CohortBuilder {
    assay_floor: f64,
    patients: BTreeSet<String>,
    therapies: Vec<Therapy>,
    genotypes: Vec<GenotypeTest>,
    viral_loads: Vec<ViralLoad>,
}

impl Default for CohortBuilder {
    fn default() -> Self {
        Self::new(DEFAULT_ASSAY_FLOOR)
    }
}

impl CohortBuilder {
    pub fn new(assay_floor: f64) -> Self {
        CohortBuilder {
            assay_floor,
            patients: BTreeSet::new(),
            therapies: Vec::new(),
            genotypes: Vec::new(),
            viral_loads: Vec::new(),
        }
    }

    pub fn has_patient(&self, id: &str) -> bool {
        self.patients.contains(id)
    }

    pub fn has_therapy(&self, therapy_id: &str) -> bool {
        self.therapies.iter().any(|t| t.therapy_id == therapy_id)
    }

    pub fn add_patient(&mut self, id: impl Into<String>) -> &mut Self {
        self.patients.insert(id.into());
        self
    }

    pub fn add_therapy(&mut self, therapy: Therapy) -> Result<&mut Self, CohortError> {
        self.require_patient(&therapy.patient_id)?;
        self.therapies.push(therapy);
        Ok(self)
    }

    pub fn add_genotype(&mut self, genotype: GenotypeTest) -> Result<&mut Self, CohortError> {
        self.require_patient(&genotype.patient_id)?;
        self.genotypes.push(genotype);
        Ok(self)
    }

    /// Adds a viral load; values below the assay floor (including zero) are
    /// clamped when the cohort is built.
    pub fn add_viral_load(&mut self, vl: ViralLoad) -> Result<&mut Self, CohortError> {
        self.require_patient(&vl.patient_id)?;
        if !(vl.copies_per_ml >= 0.0) || !vl.copies_per_ml.is_finite() {
            return Err(CohortError::InvalidViralLoad { patient: vl.patient_id, value: vl.copies_per_ml });
        }
        self.viral_loads.push(vl);
        Ok(self)
    }

    fn require_patient(&self, id: &str) -> Result<(), CohortError> {
        if self.patients.contains(id) {
            Ok(())
        } else {
            Err(CohortError::UnknownPatient(String::from(id)))
        }
    }

    pub fn build(self) -> Result<(Cohort, BuildStats), CohortError> {
        let mut stats = BuildStats::default();
        let mut patients: BTreeMap<String, PatientRecord> = self
            .patients
            .into_iter()
            .map(|id| (id.clone(), PatientRecord { id, ..PatientRecord::default() }))
            .collect();

        let mut seen = BTreeSet::new();
        for t in self.therapies {
            if !seen.insert(t.therapy_id.clone()) {
                return Err(CohortError::DuplicateTherapy(t.therapy_id));
            }
            patients.get_mut(&t.patient_id).expect("checked on insert").therapies.push(t);
        }

        let mut genotypes = self.genotypes;
        genotypes.sort_by(|a, b| (&a.patient_id, a.sample_date).cmp(&(&b.patient_id, b.sample_date)));
        for g in genotypes {
            let rec = patients.get_mut(&g.patient_id).expect("checked on insert");
            match rec.genotypes.last_mut() {
                // same-day reports are merged by union
                Some(last) if last.sample_date == g.sample_date => {
                    last.mutations.extend(g.mutations);
                    stats.merged_genotypes += 1;
                }
                _ => rec.genotypes.push(g),
            }
        }

        let mut vls = self.viral_loads;
        for v in vls.iter_mut() {
            if v.copies_per_ml < self.assay_floor {
                v.copies_per_ml = self.assay_floor;
                stats.clamped_viral_loads += 1;
            }
        }
        // stable sort keeps the input order of same-day duplicates
        vls.sort_by(|a, b| (&a.patient_id, a.date).cmp(&(&b.patient_id, b.date)));
        let mut i = 0;
        while i < vls.len() {
            let mut j = i + 1;
            while j < vls.len() && vls[j].patient_id == vls[i].patient_id && vls[j].date == vls[i].date {
                j += 1;
            }
            let group = &vls[i..j];
            // same-day measurements are merged by geometric mean
            let copies = if group.len() == 1 {
                group[0].copies_per_ml
            } else {
                stats.merged_viral_loads += group.len() - 1;
                exp(group.iter().map(|v| log(v.copies_per_ml)).sum::<f64>() / group.len() as f64)
            };
            let merged = ViralLoad { patient_id: group[0].patient_id.clone(), date: group[0].date, copies_per_ml: copies };
            patients.get_mut(&merged.patient_id).expect("checked on insert").viral_loads.push(merged);
            i = j;
        }

        for rec in patients.values_mut() {
            rec.therapies.sort_by(|a, b| (a.start, &a.therapy_id).cmp(&(b.start, &b.therapy_id)));
        }
        Ok((Cohort { patients }, stats))
    }
}

/// Resistance penalty scores for (mutation, drug) pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StanfordScoreTable {
    scores: BTreeMap<(MutationId, DrugId), i32>,
}

/// The full set of values a resistance score can take.
pub const CANONICAL_SCALE: [i32; 16] = [-15, -10, -5, 0, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60];

/// Euclidean norm of [`CANONICAL_SCALE`], `sqrt(16600)`.
pub fn canonical_scale_norm() -> f64 {
    libm::sqrt(CANONICAL_SCALE.iter().map(|s| (s * s) as f64).sum())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoreTableError {
    #[error("score {score} for {mutation}/{drug} is not on the canonical scale")]
    OffScale { mutation: MutationId, drug: DrugId, score: i32 },
    #[error("conflicting scores {first} and {second} for {mutation}/{drug}")]
    Conflict { mutation: MutationId, drug: DrugId, first: i32, second: i32 },
}

impl StanfordScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a score. Re-inserting the same value is a no-op.
    pub fn insert(&mut self, mutation: MutationId, drug: DrugId, score: i32) -> Result<(), ScoreTableError> {
        if !CANONICAL_SCALE.contains(&score) {
            return Err(ScoreTableError::OffScale { mutation, drug, score });
        }
        match self.scores.get(&(mutation, drug)) {
            Some(&prev) if prev != score => {
                Err(ScoreTableError::Conflict { mutation, drug, first: prev, second: score })
            }
            _ => {
                self.scores.insert((mutation, drug), score);
                Ok(())
            }
        }
    }

    /// Score of a pair; unlisted pairs score 0.
    pub fn score(&self, mutation: MutationId, drug: DrugId) -> i32 {
        self.scores.get(&(mutation, drug)).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (MutationId, DrugId, i32)> + '_ {
        self.scores.iter().map(|(&(m, d), &s)| (m, d, s))
    }

    /// Listed scores of one mutation.
    pub fn scores_for(&self, mutation: MutationId) -> impl Iterator<Item = (DrugId, i32)> + '_ {
        self.scores.iter().filter(move |((m, _), _)| *m == mutation).map(|(&(_, d), &s)| (d, s))
    }
}

/// Why a therapy was not admitted to the modelling dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// No genotype strictly before the therapy start.
    NoBaselineGenotype,
    /// A pre-therapy genotype lacks a viral load strictly before or after it.
    NoViralLoadAroundGenotype(Day),
    /// The outcome rules exclude the therapy.
    NoStandardDatum(ExclusionReason),
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::NoBaselineGenotype => "NoBaselineGenotype",
            RejectReason::NoViralLoadAroundGenotype(_) => "NoViralLoadAroundGenotype",
            RejectReason::NoStandardDatum(_) => "NoStandardDatum",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EligibleTherapy<'a> {
    pub patient: &'a PatientRecord,
    pub therapy: &'a Therapy,
    pub label: OutcomeLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedTherapy<'a> {
    pub patient: &'a PatientRecord,
    pub therapy: &'a Therapy,
    pub reason: RejectReason,
    /// Present when labelling ran.
    pub label: Option<OutcomeLabel>,
}

/// Partition of a cohort's therapies into eligible and rejected.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Eligibility<'a> {
    pub accepted: Vec<EligibleTherapy<'a>>,
    pub rejected: Vec<RejectedTherapy<'a>>,
}

/// Checks one therapy against the inclusion criteria, in order.
pub fn check_eligibility(patient: &PatientRecord, therapy: &Therapy) -> Result<OutcomeLabel, (RejectReason, Option<OutcomeLabel>)> {
    let prior = patient.genotypes_before(therapy.start);
    if prior.is_empty() {
        return Err((RejectReason::NoBaselineGenotype, None));
    }
    for g in prior {
        let before = patient.viral_loads.iter().any(|v| v.date < g.sample_date);
        let after = patient.viral_loads.iter().any(|v| v.date > g.sample_date);
        if !(before && after) {
            return Err((RejectReason::NoViralLoadAroundGenotype(g.sample_date), None));
        }
    }
    let label = label_therapy(therapy, &patient.viral_loads);
    match label.exclusion() {
        Some(reason) => Err((RejectReason::NoStandardDatum(reason), Some(label))),
        None => Ok(label),
    }
}

/// Splits every therapy of the cohort into eligible and rejected lists.
pub fn eligible_pairs(cohort: &Cohort) -> Eligibility<'_> {
    let mut out = Eligibility::default();
    for (patient, therapy) in cohort.therapies() {
        match check_eligibility(patient, therapy) {
            Ok(label) => out.accepted.push(EligibleTherapy { patient, therapy, label }),
            Err((reason, label)) => out.rejected.push(RejectedTherapy { patient, therapy, reason, label }),
        }
    }
    out
}
