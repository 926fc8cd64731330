//! Seeded synthetic cohorts with planted ground truth.
//!
//! Each patient receives a sequence of regimens made of two nucleoside
//! reverse-transcriptase inhibitors plus a third agent. The third class
//! changes between consecutive therapies, except that half the regimens
//! resumed after a treatment interruption keep it. Mutations of a class are acquired under
//! pressure from that class, mostly while a therapy fails. Once pressure
//! stops, every acquired mutation vanishes from blood after a delay drawn
//! from its planted sigmoid `1/(1+e^(alpha+beta t))`, but stays archived and
//! reappears as soon as the class is given again.
//!
//! Outcomes follow a logistic model. The current term sums the resistance of
//! the mutations in the baseline genotype, each weighted by its planted
//! persistence over the time since that genotype. The reservoir term, scaled
//! by `reservoir_effect`, sums the resistance of mutations seen in earlier
//! genotypes but missing from the baseline one, each halved every
//! `reservoir_half_life_days` since it was last seen. Both terms only use what
//! the genotypes show, so without a reservoir effect the outcome depends on
//! the baseline genotype alone. Viral loads are then laid out so that the
//! outcome rules reproduce the drawn outcome.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::LN_2;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use retropredict_core::cohort::StanfordScoreTable;
use retropredict_core::domain::{Day, DrugClass, DrugId, Gene, GenotypeTest, MutationId, Therapy, ViralLoad};
use retropredict_core::math::{decreasing_sigmoid, logistic};
use serde::Serialize;

use crate::config::{derive_seed, KeyValues};
use crate::error::{Error, Result};
use crate::ingest::{parse_date, CohortRecords};

/// Regimen building blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrugMenu {
    /// First backbone drug.
    pub backbone_a: Vec<DrugId>,
    /// Second backbone drug.
    pub backbone_b: Vec<DrugId>,
    pub third_agents: BTreeMap<DrugClass, Vec<DrugId>>,
}

impl Default for DrugMenu {
    fn default() -> Self {
        use DrugId::*;
        DrugMenu {
            backbone_a: vec![Lamivudine, Emtricitabine],
            backbone_b: vec![TenofovirDisoproxil, TenofovirAlafenamide, Abacavir, Zidovudine, Stavudine, Didanosine],
            third_agents: BTreeMap::from([
                (DrugClass::PI, vec![Atazanavir, Darunavir, Lopinavir, Fosamprenavir, Indinavir, Nelfinavir, Saquinavir, Tipranavir]),
                (DrugClass::NNRTI, vec![Efavirenz, Nevirapine, Etravirine, Rilpivirine, Doravirine]),
                (DrugClass::INI, vec![Raltegravir, Elvitegravir, Dolutegravir, Bictegravir]),
            ]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_patients: usize,
    /// Resistance mutations, spread evenly over the four classes.
    pub n_mutations: usize,
    /// Mutations without resistance scores carried for life by some patients.
    pub n_polymorphisms: usize,
    pub min_therapies: usize,
    pub max_therapies: usize,
    pub drug_menu: DrugMenu,
    /// Planted persistence intercept shared by every mutation.
    pub alpha_star: f64,
    /// Planted slopes of the slowly and quickly vanishing groups.
    pub beta_slow: f64,
    pub beta_fast: f64,
    /// Log-odds of failure per unit of archived, invisible resistance.
    pub reservoir_effect: f64,
    /// Half-life in days of a mutation's weight in the reservoir term, counted
    /// from the last genotype that showed it.
    pub reservoir_half_life_days: f64,
    /// Probability that a therapy is followed by a treatment interruption.
    pub interruption_probability: f64,
    /// Probability that the regimen resumed after an interruption keeps the
    /// previous third-agent class.
    pub resume_probability: f64,
    /// Log-odds of failure per unit of visible resistance.
    pub resistance_effect: f64,
    /// Log-odds of failure with no resistance at all.
    pub baseline_log_odds: f64,
    /// Standard deviation of log10 viral-load measurement noise.
    pub vl_noise_sd: f64,
    /// Probability that the drawn outcome is flipped.
    pub label_noise: f64,
    /// Expected new mutations per class in a failing / successful therapy.
    pub acquisition_failing: f64,
    pub acquisition_successful: f64,
    /// Expected transmitted mutations at diagnosis.
    pub transmitted: f64,
    /// Mean spacing in days of genotypes taken outside therapy switches.
    pub genotype_interval_days: f64,
    pub first_diagnosis: Day,
    pub last_diagnosis: Day,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 2000,
            n_mutations: 48,
            n_polymorphisms: 8,
            min_therapies: 2,
            max_therapies: 6,
            drug_menu: DrugMenu::default(),
            alpha_star: -3.0,
            beta_slow: 0.005,
            beta_fast: 0.05,
            reservoir_effect: 1.0,
            reservoir_half_life_days: 3000.0,
            interruption_probability: 0.7,
            resume_probability: 0.8,
            resistance_effect: 0.7,
            baseline_log_odds: -1.5,
            vl_noise_sd: 0.3,
            label_noise: 0.02,
            acquisition_failing: 6.0,
            acquisition_successful: 0.1,
            transmitted: 0.3,
            genotype_interval_days: 120.0,
            first_diagnosis: parse_date("2000-01-01").expect("valid date"),
            last_diagnosis: parse_date("2010-01-01").expect("valid date"),
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// Takes the generator's keys from a config file.
    pub fn from_key_values(kv: &mut KeyValues) -> Result<Self> {
        let d = SynthConfig::default();
        let date = |kv: &mut KeyValues, key: &str, default: Day| -> Result<Day> {
            match kv.take::<String>(key)? {
                None => Ok(default),
                Some(s) => parse_date(&s).ok_or_else(|| Error::Usage(format!("`{key}`: invalid date `{s}`"))),
            }
        };
        Ok(SynthConfig {
            n_patients: kv.take_or("n_patients", d.n_patients)?,
            n_mutations: kv.take_or("n_mutations", d.n_mutations)?,
            n_polymorphisms: kv.take_or("n_polymorphisms", d.n_polymorphisms)?,
            min_therapies: kv.take_or("min_therapies", d.min_therapies)?,
            max_therapies: kv.take_or("max_therapies", d.max_therapies)?,
            drug_menu: d.drug_menu,
            alpha_star: kv.take_or("alpha_star", d.alpha_star)?,
            beta_slow: kv.take_or("beta_slow", d.beta_slow)?,
            beta_fast: kv.take_or("beta_fast", d.beta_fast)?,
            reservoir_effect: kv.take_or("reservoir_effect", d.reservoir_effect)?,
            reservoir_half_life_days: kv.take_or("reservoir_half_life_days", d.reservoir_half_life_days)?,
            interruption_probability: kv.take_or("interruption_probability", d.interruption_probability)?,
            resume_probability: kv.take_or("resume_probability", d.resume_probability)?,
            resistance_effect: kv.take_or("resistance_effect", d.resistance_effect)?,
            baseline_log_odds: kv.take_or("baseline_log_odds", d.baseline_log_odds)?,
            vl_noise_sd: kv.take_or("vl_noise_sd", d.vl_noise_sd)?,
            label_noise: kv.take_or("label_noise", d.label_noise)?,
            acquisition_failing: kv.take_or("acquisition_failing", d.acquisition_failing)?,
            acquisition_successful: kv.take_or("acquisition_successful", d.acquisition_successful)?,
            transmitted: kv.take_or("transmitted", d.transmitted)?,
            genotype_interval_days: kv.take_or("genotype_interval_days", d.genotype_interval_days)?,
            first_diagnosis: date(kv, "first_diagnosis", d.first_diagnosis)?,
            last_diagnosis: date(kv, "last_diagnosis", d.last_diagnosis)?,
            seed: d.seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Synth(m));
        if self.n_patients < 2 {
            return bad(format!("need at least 2 patients, got {}", self.n_patients));
        }
        if self.n_mutations < DrugClass::ALL.len() {
            return bad(format!("need at least one mutation per drug class, got {}", self.n_mutations));
        }
        if self.min_therapies == 0 || self.min_therapies > self.max_therapies {
            return bad(format!("invalid therapy count range {}..={}", self.min_therapies, self.max_therapies));
        }
        if self.drug_menu.third_agents.len() < 2 || self.drug_menu.backbone_a.is_empty() || self.drug_menu.backbone_b.is_empty() {
            return bad("the drug menu needs two backbone lists and at least two third-agent classes".into());
        }
        for (name, p) in [("interruption_probability", self.interruption_probability), ("resume_probability", self.resume_probability)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(0.0..=0.5).contains(&self.label_noise) {
            return bad(format!("label_noise must lie in [0, 0.5], got {}", self.label_noise));
        }
        if !(self.reservoir_effect >= 0.0) || !(self.resistance_effect >= 0.0) {
            return bad("effects must be non-negative".into());
        }
        if !(self.reservoir_half_life_days > 0.0) {
            return bad("reservoir_half_life_days must be positive".into());
        }
        if !(self.beta_slow > 0.0 && self.beta_fast > 0.0) {
            return bad("planted slopes must be positive".into());
        }
        if !(self.vl_noise_sd >= 0.0) || !(self.genotype_interval_days > 0.0) {
            return bad("vl_noise_sd must be non-negative and genotype_interval_days positive".into());
        }
        if !(self.acquisition_failing >= 0.0 && self.acquisition_successful >= 0.0 && self.transmitted >= 0.0) {
            return bad("acquisition rates must be non-negative".into());
        }
        if self.last_diagnosis < self.first_diagnosis {
            return bad("last_diagnosis precedes first_diagnosis".into());
        }
        Ok(())
    }
}

/// Persistence group of a planted mutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum DecayGroup {
    Slow,
    Fast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MutationTruth {
    pub mutation: MutationId,
    pub class: DrugClass,
    pub group: DecayGroup,
    pub alpha: f64,
    pub beta: f64,
    /// Polymorphisms carry no resistance and never decay.
    pub polymorphism: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TherapyTruth {
    pub therapy_id: String,
    pub visible_resistance: f64,
    pub archived_resistance: f64,
    pub failure_probability: f64,
    pub failure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthTruth {
    pub mutations: Vec<MutationTruth>,
    pub therapies: Vec<TherapyTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCohort {
    pub records: CohortRecords,
    pub truth: SynthTruth,
}

const PR_DRMS: &[&str] = &[
    "30N", "90M", "46I", "54V", "82A", "84V", "48V", "50L", "32I", "47V", "76V", "88S", "33F", "50V", "24I", "53L",
    "54L", "73S", "82F", "82T", "10F", "11I", "20T", "71V", "74P", "43T", "58E", "83D", "89V", "46L",
];
const NRTI_DRMS: &[&str] = &[
    "184V", "65R", "41L", "215Y", "70R", "74V", "67N", "210W", "219Q", "151M", "115F", "69D", "62V", "75I", "77L",
    "116Y", "184I", "215F", "219E", "70E", "44D", "118I",
];
const NNRTI_DRMS: &[&str] = &[
    "103N", "181C", "190A", "188L", "101E", "106M", "100I", "138K", "230L", "227C", "179D", "98G", "101P", "103S",
    "106A", "108I", "138A", "181I", "188C", "190S", "221Y", "225H", "234I", "236L",
];
const INI_DRMS: &[&str] = &[
    "148H", "155H", "143R", "66I", "92Q", "118R", "263K", "140S", "97A", "121Y", "138K", "147G", "51Y", "66K",
    "74M", "92G", "95K", "138A", "140A", "143C", "148R", "148K", "151L", "157Q", "163R", "230R",
];
const POLYMORPHISMS: &[&str] = &[
    "PR35D", "RT211K", "IN124A", "PR63P", "RT214F", "IN125A", "PR93L", "RT200A", "IN201I", "PR15V", "RT135T", "IN72V",
];
const AMINO_ACIDS: &[u8] = b"ACDEFGHIKLMNPQRSTVWY";

fn class_list(class: DrugClass) -> (&'static [&'static str], Gene, u32) {
    match class {
        DrugClass::PI => (PR_DRMS, Gene::PR, 99),
        DrugClass::NRTI => (NRTI_DRMS, Gene::RT, 240),
        DrugClass::NNRTI => (NNRTI_DRMS, Gene::RT, 560),
        DrugClass::INI => (INI_DRMS, Gene::IN, 288),
    }
}

/// Picks `n` distinct mutations of a class: listed ones first, then
/// invented positions of the class's gene.
fn class_mutations(class: DrugClass, n: usize, taken: &mut BTreeSet<MutationId>) -> Vec<MutationId> {
    let (list, gene, max_position) = class_list(class);
    let mut out = Vec::with_capacity(n);
    for token in list {
        if out.len() == n {
            break;
        }
        let m = MutationId::parse(&format!("{}{token}", gene.as_str())).expect("built-in token");
        if taken.insert(m) {
            out.push(m);
        }
    }
    let mut k = 0usize;
    while out.len() < n {
        let position = 1 + (k * 7) as u32 % max_position;
        let aa = AMINO_ACIDS[(k / max_position as usize + k) % AMINO_ACIDS.len()] as char;
        k += 1;
        let m = MutationId::new(gene, position, aa).expect("valid mutation");
        if taken.insert(m) {
            out.push(m);
        }
    }
    out
}

struct Catalog {
    truths: Vec<MutationTruth>,
    index: BTreeMap<MutationId, usize>,
    by_class: BTreeMap<DrugClass, Vec<usize>>,
    polymorphisms: Vec<usize>,
    scores: StanfordScoreTable,
}

impl Catalog {
    fn build(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Catalog {
        let mut taken = BTreeSet::new();
        let mut truths = Vec::new();
        let mut by_class: BTreeMap<DrugClass, Vec<usize>> = BTreeMap::new();
        let mut scores = StanfordScoreTable::new();
        let classes = DrugClass::ALL.len();
        let polymorphisms: Vec<MutationId> = POLYMORPHISMS
            .iter()
            .take(config.n_polymorphisms)
            .map(|t| MutationId::parse(t).expect("built-in token"))
            .collect();
        taken.extend(polymorphisms.iter().copied());
        for (ci, class) in DrugClass::ALL.into_iter().enumerate() {
            let n = config.n_mutations / classes + usize::from(ci < config.n_mutations % classes);
            for (i, m) in class_mutations(class, n, &mut taken).into_iter().enumerate() {
                let group = if i % 2 == 0 { DecayGroup::Slow } else { DecayGroup::Fast };
                let beta = if group == DecayGroup::Slow { config.beta_slow } else { config.beta_fast };
                let strength: f64 = rng.random_range(0.3..1.0);
                for &d in retropredict_core::domain::DrugId::ALL.iter().filter(|d| d.class() == class) {
                    if rng.random_bool(0.8) {
                        let raw = strength * 60.0 * rng.random_range(0.6..1.0);
                        let s = ((raw / 5.0).round() as i32 * 5).clamp(5, 60);
                        scores.insert(m, d, s).expect("score on scale");
                    }
                }
                by_class.entry(class).or_default().push(truths.len());
                truths.push(MutationTruth { mutation: m, class, group, alpha: config.alpha_star, beta, polymorphism: false });
            }
        }
        let mut poly_idx = Vec::new();
        for m in polymorphisms {
            let class = match m.gene {
                Gene::PR => DrugClass::PI,
                Gene::RT => DrugClass::NNRTI,
                Gene::IN => DrugClass::INI,
            };
            poly_idx.push(truths.len());
            truths.push(MutationTruth { mutation: m, class, group: DecayGroup::Slow, alpha: -40.0, beta: 0.0, polymorphism: true });
        }
        let index = truths.iter().enumerate().map(|(i, t)| (t.mutation, i)).collect();
        Catalog { truths, index, by_class, polymorphisms: poly_idx, scores }
    }

    /// Strongest score of a mutation against a regimen, scaled to [0, 1].
    fn resistance(&self, m: usize, drugs: &BTreeSet<DrugId>) -> f64 {
        let id = self.truths[m].mutation;
        drugs.iter().map(|&d| self.scores.score(id, d)).max().unwrap_or(0).max(0) as f64 / 60.0
    }
}

struct Plan {
    start: Day,
    end: Day,
    /// `true` when the therapy has no recorded end date.
    ongoing: bool,
    drugs: BTreeSet<DrugId>,
    baseline_genotype: Day,
}

struct Acquired {
    mutation: usize,
    day: Day,
}

struct Patient<'a> {
    catalog: &'a Catalog,
    seed: u64,
    plans: Vec<Plan>,
    /// Pressure periods of each class, in order.
    pressure: BTreeMap<DrugClass, Vec<(Day, Day)>>,
    archive: Vec<Acquired>,
    polymorphisms: Vec<usize>,
}

impl Patient<'_> {
    fn under_pressure(&self, class: DrugClass, day: Day) -> bool {
        self.pressure.get(&class).is_some_and(|ps| ps.iter().any(|&(s, e)| s <= day && day <= e))
    }

    /// End of the latest pressure period of `class` that finished before
    /// `day` and after `since`.
    fn last_release(&self, class: DrugClass, since: Day, day: Day) -> Day {
        self.pressure
            .get(&class)
            .into_iter()
            .flatten()
            .filter(|&&(_, e)| e < day && e >= since)
            .map(|&(_, e)| e)
            .max()
            .unwrap_or(since)
    }

    /// Days a mutation stays in blood after the pressure ending at `release`.
    fn persistence_delay(&self, m: usize, release: Day) -> f64 {
        let t = &self.catalog.truths[m];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, m as u64, release.0 as u64 ^ 0xdeca_0000));
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        (((1.0 / u - 1.0).ln() - t.alpha) / t.beta).max(0.0)
    }

    fn visible(&self, a: &Acquired, day: Day) -> bool {
        if day < a.day {
            return false;
        }
        let class = self.catalog.truths[a.mutation].class;
        if self.under_pressure(class, day) {
            return true;
        }
        let release = self.last_release(class, a.day, day);
        (day.days_since(release) as f64) < self.persistence_delay(a.mutation, release)
    }

    fn genotype(&self, day: Day) -> BTreeSet<MutationId> {
        let mut out: BTreeSet<MutationId> =
            self.polymorphisms.iter().map(|&m| self.catalog.truths[m].mutation).collect();
        for a in &self.archive {
            if self.visible(a, day) {
                out.insert(self.catalog.truths[a.mutation].mutation);
            }
        }
        out
    }
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    *items.choose(rng).expect("non-empty menu")
}

/// Schedule of therapies: dates and regimens, independent of outcomes.
fn schedule(config: &SynthConfig, rng: &mut ChaCha8Rng, diagnosis: Day) -> Vec<Plan> {
    let n = rng.random_range(config.min_therapies..=config.max_therapies);
    let classes: Vec<DrugClass> = config.drug_menu.third_agents.keys().copied().collect();
    let mut plans: Vec<Plan> = Vec::with_capacity(n);
    let mut start = diagnosis.plus(rng.random_range(14..=60));
    let mut previous: Option<DrugClass> = None;
    let mut interrupted = false;
    for j in 0..n {
        let choices: Vec<DrugClass> = classes.iter().copied().filter(|&c| Some(c) != previous).collect();
        let class = match previous {
            Some(c) if interrupted && rng.random_bool(config.resume_probability) => c,
            _ => pick(rng, &choices),
        };
        previous = Some(class);
        let mut drugs = BTreeSet::new();
        drugs.insert(pick(rng, &config.drug_menu.backbone_a));
        drugs.insert(pick(rng, &config.drug_menu.backbone_b));
        drugs.insert(pick(rng, &config.drug_menu.third_agents[&class]));
        let kind: f64 = rng.random();
        let duration = if kind < 0.04 {
            rng.random_range(7..=28)
        } else if kind < 0.10 {
            rng.random_range(35..=135)
        } else {
            rng.random_range(200..=900)
        };
        let last = j + 1 == n;
        let ongoing = last && duration >= 200 && rng.random_bool(0.5);
        let baseline_genotype = match plans.last() {
            None => diagnosis,
            Some(p) => start.plus(-rng.random_range(7..=45)).max(p.start.plus(1)),
        };
        plans.push(Plan { start, end: start.plus(duration), ongoing, drugs, baseline_genotype });
        interrupted = rng.random_bool(config.interruption_probability);
        let gap = if interrupted { rng.random_range(180..=900) } else { 1 };
        start = start.plus(duration + gap);
    }
    plans
}

struct PatientOutput {
    id: String,
    therapies: Vec<Therapy>,
    genotypes: Vec<GenotypeTest>,
    viral_loads: Vec<ViralLoad>,
    truths: Vec<TherapyTruth>,
}

fn simulate_patient(config: &SynthConfig, catalog: &Catalog, index: usize, width: usize) -> PatientOutput {
    let seed = derive_seed(config.seed, index as u64, 0x5e7_a11);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = format!("P{:0width$}", index + 1);
    let span = config.last_diagnosis.days_since(config.first_diagnosis).max(0);
    let diagnosis = config.first_diagnosis.plus(rng.random_range(0..=span));
    let plans = schedule(config, &mut rng, diagnosis);
    let mut pressure: BTreeMap<DrugClass, Vec<(Day, Day)>> = BTreeMap::new();
    for p in &plans {
        let classes: BTreeSet<DrugClass> = p.drugs.iter().map(|d| d.class()).collect();
        for c in classes {
            pressure.entry(c).or_default().push((p.start, p.end));
        }
    }
    let polymorphisms = catalog.polymorphisms.iter().copied().filter(|_| rng.random_bool(0.15)).collect();
    let mut patient = Patient { catalog, seed, plans: Vec::new(), pressure, archive: Vec::new(), polymorphisms };

    let all_resistance: Vec<usize> = catalog.by_class.values().flatten().copied().collect();
    let transmitted = Poisson::new(config.transmitted).map(|p| p.sample(&mut rng) as usize).unwrap_or(0);
    for _ in 0..transmitted {
        let m = pick(&mut rng, &all_resistance);
        if patient.archive.iter().all(|a| a.mutation != m) {
            let day = diagnosis.plus(-rng.random_range(30..=365));
            patient.archive.push(Acquired { mutation: m, day });
        }
    }

    let noise = Normal::new(0.0, config.vl_noise_sd.max(1e-12)).expect("valid sd");
    let set_point: f64 = Normal::<f64>::new(4.5, 0.5).expect("valid sd").sample(&mut rng).clamp(3.3, 6.0);

    let last_day = plans.last().map(|p| p.end).unwrap_or(diagnosis);
    let mut candidates: BTreeSet<Day> = plans.iter().map(|p| p.baseline_genotype).collect();
    let mut day = diagnosis;
    loop {
        let gap = rand_distr::Exp::new(1.0 / config.genotype_interval_days).expect("positive rate").sample(&mut rng);
        day = day.plus(gap.ceil().max(1.0) as i32);
        if day >= last_day {
            break;
        }
        candidates.insert(day);
    }

    let mut therapies = Vec::new();
    let mut truths = Vec::new();
    let mut outcomes = Vec::new();
    let mut genotypes: BTreeMap<Day, BTreeSet<MutationId>> = BTreeMap::new();
    let mut pending = candidates.into_iter().peekable();

    for (j, plan) in plans.into_iter().enumerate() {
        // resistance tests only succeed on viremic samples
        while let Some(d) = pending.next_if(|&d| d < plan.start) {
            if d == diagnosis || latent_log_vl(&patient, &outcomes, set_point, d) >= GENOTYPABLE_LOG_VL {
                genotypes.insert(d, patient.genotype(d));
            }
        }
        let (&baseline_day, _) = genotypes.last_key_value().expect("diagnosis genotype precedes every therapy");
        let mut last_seen: BTreeMap<MutationId, Day> = BTreeMap::new();
        for (&d, ms) in &genotypes {
            for &m in ms {
                last_seen.insert(m, d);
            }
        }
        let mut visible_resistance = 0.0;
        let mut archived_resistance = 0.0;
        for (&m, &seen) in &last_seen {
            let Some(&i) = catalog.index.get(&m) else { continue };
            let t = &catalog.truths[i];
            let age = plan.start.days_since(seen) as f64;
            let r = catalog.resistance(i, &plan.drugs);
            if seen == baseline_day {
                visible_resistance += r * decreasing_sigmoid(t.alpha + t.beta * age);
            } else {
                archived_resistance += r * (-age * LN_2 / config.reservoir_half_life_days).exp();
            }
        }
        let failure_probability = logistic(
            config.baseline_log_odds
                + config.resistance_effect * visible_resistance
                + config.reservoir_effect * archived_resistance,
        );
        let mut failure = rng.random_bool(failure_probability);
        if rng.random_bool(config.label_noise) {
            failure = !failure;
        }
        let therapy_id = format!("{id}-T{}", j + 1);
        truths.push(TherapyTruth { therapy_id: therapy_id.clone(), visible_resistance, archived_resistance, failure_probability, failure });

        let rate = if failure { config.acquisition_failing } else { config.acquisition_successful };
        let duration = plan.end.days_since(plan.start);
        let classes: BTreeSet<DrugClass> = plan.drugs.iter().map(|d| d.class()).collect();
        for class in classes {
            let k = Poisson::new(rate.max(1e-12)).map(|p| p.sample(&mut rng) as usize).unwrap_or(0);
            let pool: Vec<usize> = catalog.by_class[&class]
                .iter()
                .copied()
                .filter(|&m| patient.archive.iter().all(|a| a.mutation != m))
                .collect();
            for &m in pool.choose_multiple(&mut rng, k) {
                let lo = 30.min(duration / 2);
                let hi = 150.min(duration).max(lo);
                let day = plan.start.plus(rng.random_range(lo..=hi));
                patient.archive.push(Acquired { mutation: m, day });
            }
        }
        therapies.push(
            Therapy::new(id.clone(), therapy_id, plan.start, (!plan.ongoing).then_some(plan.end), plan.drugs.iter().copied())
                .expect("valid therapy"),
        );
        outcomes.push(failure);
        patient.plans.push(plan);
    }
    for d in pending {
        if latent_log_vl(&patient, &outcomes, set_point, d) >= GENOTYPABLE_LOG_VL {
            genotypes.insert(d, patient.genotype(d));
        }
    }
    let genotypes: Vec<GenotypeTest> = genotypes
        .into_iter()
        .map(|(sample_date, mutations)| GenotypeTest { patient_id: id.clone(), sample_date, mutations })
        .collect();

    let viral_loads = viral_loads(&patient, &outcomes, &id, diagnosis, set_point, &noise, &mut rng);
    PatientOutput { id, therapies, genotypes, viral_loads, truths }
}

/// Latent log10 viral load on `day`.
fn latent_log_vl(patient: &Patient<'_>, outcomes: &[bool], set_point: f64, day: Day) -> f64 {
    let Some(j) = patient.plans.iter().rposition(|p| p.start <= day) else {
        return set_point;
    };
    let p = &patient.plans[j];
    if day > p.end {
        // off treatment: rebound towards the set point within a month
        let off = day.days_since(p.end) as f64;
        let from = if outcomes[j] { failing_log_vl(set_point) } else { SUPPRESSED_LOG_VL };
        return from + (set_point - from) * (off / 30.0).min(1.0);
    }
    let on = day.days_since(p.start) as f64;
    if outcomes[j] {
        failing_log_vl(set_point)
    } else {
        set_point + (SUPPRESSED_LOG_VL - set_point) * (on / 84.0).min(1.0)
    }
}

const SUPPRESSED_LOG_VL: f64 = 1.3;
const GENOTYPABLE_LOG_VL: f64 = 3.0;

fn failing_log_vl(set_point: f64) -> f64 {
    (set_point - 0.5).max(3.3)
}

fn viral_loads(
    patient: &Patient<'_>,
    outcomes: &[bool],
    id: &str,
    diagnosis: Day,
    set_point: f64,
    noise: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> Vec<ViralLoad> {
    let last_day = patient.plans.last().map(|p| p.end).unwrap_or(diagnosis);
    // windows whose viral loads decide an outcome are laid out explicitly
    let mut reserved: Vec<(Day, Day)> = Vec::new();
    let mut deciding: BTreeMap<Day, f64> = BTreeMap::new();
    for (p, &failure) in patient.plans.iter().zip(outcomes) {
        let duration = p.end.days_since(p.start);
        let baseline_day = p.start.plus(-3);
        let baseline = 10f64.powf(latent_log_vl(patient, outcomes, set_point, baseline_day) + noise.sample(rng));
        deciding.insert(baseline_day, baseline.round().max(1.0));
        // the previous therapy's closing viral load may sit after this baseline
        let baseline = deciding.range(..=p.start).next_back().map_or(baseline, |(_, &v)| v);
        reserved.push((p.start.plus(-10), p.start));
        if p.ongoing || duration >= 140 {
            reserved.push((p.start.plus(140), p.start.plus(196)));
            let day = p.start.plus(168 + rng.random_range(-14..=14));
            let copies = if failure {
                10f64.powf(failing_log_vl(set_point) + noise.sample(rng)).max(200.0)
            } else {
                rng.random_range(5.0..49.0)
            };
            deciding.insert(day, copies.round().max(1.0));
        } else if duration > 28 {
            reserved.push((p.end.plus(-7), p.end));
            let copies = if failure {
                baseline * 10f64.powf(rng.random_range(-0.5..0.3))
            } else {
                rng.random_range(5.0..49.0)
            };
            deciding.insert(p.end, copies.round().max(if failure { 100.0 } else { 1.0 }));
        }
    }
    let mut out: BTreeMap<Day, f64> = BTreeMap::new();
    let mut day = diagnosis.plus(-14);
    while day <= last_day.plus(30) {
        if !reserved.iter().any(|&(a, b)| a <= day && day <= b) {
            let log_vl = latent_log_vl(patient, outcomes, set_point, day);
            let copies = if log_vl <= SUPPRESSED_LOG_VL + 1e-9 {
                rng.random_range(1.0..45.0)
            } else {
                10f64.powf(log_vl + noise.sample(rng))
            };
            out.insert(day, copies.round().max(1.0));
        }
        day = day.plus(rng.random_range(60..=120));
    }
    out.extend(deciding);
    out.into_iter().map(|(date, copies_per_ml)| ViralLoad { patient_id: id.to_string(), date, copies_per_ml }).collect()
}

/// Generates a cohort; identical configurations give identical output.
pub fn generate_cohort(config: &SynthConfig) -> Result<SynthCohort> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0, 0xca7a_1090));
    let catalog = Catalog::build(config, &mut rng);
    let width = config.n_patients.to_string().len().max(4);
    let patients: Vec<PatientOutput> =
        (0..config.n_patients).into_par_iter().map(|i| simulate_patient(config, &catalog, i, width)).collect();
    let mut records = CohortRecords { scores: catalog.scores.clone(), ..CohortRecords::default() };
    let mut therapies = Vec::new();
    for p in patients {
        records.patients.push(p.id);
        records.therapies.extend(p.therapies);
        records.genotypes.extend(p.genotypes);
        records.viral_loads.extend(p.viral_loads);
        therapies.extend(p.truths);
    }
    Ok(SynthCohort { records, truth: SynthTruth { mutations: catalog.truths, therapies } })
}
