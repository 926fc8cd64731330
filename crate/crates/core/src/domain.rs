//! Shared vocabulary: mutations, drugs, therapies and measurements.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Calendar day as a whole-day count from 1970-01-01.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Day(pub i32);

impl Day {
    pub fn days_since(self, earlier: Day) -> i32 {
        self.0 - earlier.0
    }

    pub fn plus(self, days: i32) -> Day {
        Day(self.0 + days)
    }
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// HIV gene region a mutation lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Gene {
    PR,
    RT,
    IN,
}

impl Gene {
    pub fn as_str(self) -> &'static str {
        match self {
            Gene::PR => "PR",
            Gene::RT => "RT",
            Gene::IN => "IN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MutationParseError {
    #[error("malformed mutation token `{0}`")]
    Malformed(String),
    #[error("unknown gene in mutation token `{0}`")]
    UnknownGene(String),
    #[error("non-positive position in mutation token `{0}`")]
    NonPositivePosition(String),
    #[error("insertions, deletions and mixtures are not supported: `{0}`")]
    Unsupported(String),
}

/// Amino-acid substitution, identified without its wild-type letter.
///
/// `RTM184V` and `RT184V` denote the same mutation. Ordering is by gene,
/// then position, then amino acid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MutationId {
    pub gene: Gene,
    pub position: u32,
    pub amino_acid: u8,
}

const AMINO_ACIDS: &[u8] = b"ACDEFGHIKLMNPQRSTVWY";

fn is_amino_acid(c: u8) -> bool {
    AMINO_ACIDS.contains(&c)
}

impl MutationId {
    pub fn new(gene: Gene, position: u32, amino_acid: char) -> Option<Self> {
        let aa = u8::try_from(amino_acid).ok()?;
        (position > 0 && is_amino_acid(aa)).then_some(MutationId { gene, position, amino_acid: aa })
    }

    pub fn amino_acid(&self) -> char {
        self.amino_acid as char
    }

    /// Parses `<GENE>[ref]<position><aa>`, e.g. `RTM184V` or `PR90M`.
    pub fn parse(token: &str) -> Result<Self, MutationParseError> {
        let err = |f: fn(String) -> MutationParseError| f(String::from(token));
        let t = token.trim();
        if t.len() < 4 || !t.is_ascii() {
            return Err(err(MutationParseError::Malformed));
        }
        let gene = match &t[..2] {
            "PR" => Gene::PR,
            "RT" => Gene::RT,
            "IN" => Gene::IN,
            _ => return Err(err(MutationParseError::UnknownGene)),
        };
        let rest = &t.as_bytes()[2..];
        let mut i = 0;
        if rest[0].is_ascii_alphabetic() {
            if !is_amino_acid(rest[0]) {
                return Err(err(MutationParseError::Malformed));
            }
            i = 1;
        }
        let digits_start = i;
        if rest.get(i) == Some(&b'-') {
            return Err(err(MutationParseError::NonPositivePosition));
        }
        while i < rest.len() && rest[i].is_ascii_digit() {
            i += 1;
        }
        if i == digits_start {
            return Err(err(MutationParseError::Malformed));
        }
        let position: u32 = core::str::from_utf8(&rest[digits_start..i])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(MutationParseError::Malformed))?;
        if position == 0 {
            return Err(err(MutationParseError::NonPositivePosition));
        }
        let tail = &rest[i..];
        match tail {
            [aa] if is_amino_acid(*aa) => Ok(MutationId { gene, position, amino_acid: *aa }),
            [] => Err(err(MutationParseError::Malformed)),
            _ => {
                let lower = tail.to_ascii_lowercase();
                let indel = lower.starts_with(b"ins")
                    || lower.starts_with(b"del")
                    || tail.iter().any(|c| matches!(c, b'~' | b'#' | b'-'));
                let mixture = tail.len() > 1 && tail.iter().all(|c| is_amino_acid(*c) || *c == b'/');
                if indel || mixture {
                    Err(err(MutationParseError::Unsupported))
                } else {
                    Err(err(MutationParseError::Malformed))
                }
            }
        }
    }
}

impl fmt::Display for MutationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.gene.as_str(), self.position, self.amino_acid as char)
    }
}

impl FromStr for MutationId {
    type Err = MutationParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MutationId::parse(s)
    }
}

#[cfg(feature = "serde")]
impl Serialize for MutationId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[cfg(feature = "serde")]
impl<'de> Deserialize<'de> for MutationId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <alloc::borrow::Cow<'de, str>>::deserialize(d)?;
        MutationId::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Antiretroviral drug class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum DrugClass {
    PI,
    NRTI,
    NNRTI,
    INI,
}

impl DrugClass {
    pub const ALL: [DrugClass; 4] = [DrugClass::PI, DrugClass::NRTI, DrugClass::NNRTI, DrugClass::INI];

    /// Gene whose product the class targets.
    pub fn target_gene(self) -> Gene {
        match self {
            DrugClass::PI => Gene::PR,
            DrugClass::NRTI | DrugClass::NNRTI => Gene::RT,
            DrugClass::INI => Gene::IN,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DrugClass::PI => "PI",
            DrugClass::NRTI => "NRTI",
            DrugClass::NNRTI => "NNRTI",
            DrugClass::INI => "INI",
        }
    }
}

impl fmt::Display for DrugClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DrugClass {
    type Err = UnknownDrug;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DrugClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownDrug(String::from(s)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown drug code `{0}`")]
pub struct UnknownDrug(pub String);

macro_rules! drugs {
    ($($variant:ident => $code:literal, $class:ident;)*) => {
        /// One of the 29 antiretroviral compounds the pipeline knows about.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum DrugId {
            $($variant,)*
        }

        impl DrugId {
            pub const ALL: &'static [DrugId] = &[$(DrugId::$variant,)*];

            pub fn code(self) -> &'static str {
                match self {
                    $(DrugId::$variant => $code,)*
                }
            }

            pub fn class(self) -> DrugClass {
                match self {
                    $(DrugId::$variant => DrugClass::$class,)*
                }
            }

            pub fn from_code(code: &str) -> Result<Self, UnknownDrug> {
                match code.trim() {
                    $($code => Ok(DrugId::$variant),)*
                    other => Err(UnknownDrug(String::from(other))),
                }
            }
        }
    };
}

drugs! {
    Lamivudine => "3TC", NRTI;
    Abacavir => "ABC", NRTI;
    Amprenavir => "APV", PI;
    Atazanavir => "ATV", PI;
    Zidovudine => "AZT", NRTI;
    Bictegravir => "BIC", INI;
    Cabotegravir => "CAB", INI;
    Stavudine => "D4T", NRTI;
    Zalcitabine => "DDC", NRTI;
    Didanosine => "DDI", NRTI;
    Delavirdine => "DLV", NNRTI;
    Doravirine => "DOR", NNRTI;
    Darunavir => "DRV", PI;
    Dolutegravir => "DTG", INI;
    Efavirenz => "EFV", NNRTI;
    Etravirine => "ETR", NNRTI;
    Elvitegravir => "EVG", INI;
    Fosamprenavir => "FPV", PI;
    Emtricitabine => "FTC", NRTI;
    Indinavir => "IDV", PI;
    Lopinavir => "LPV", PI;
    Nelfinavir => "NFV", PI;
    Nevirapine => "NVP", NNRTI;
    Raltegravir => "RAL", INI;
    Rilpivirine => "RPV", NNRTI;
    Saquinavir => "SQV", PI;
    TenofovirAlafenamide => "TAF", NRTI;
    TenofovirDisoproxil => "TDF", NRTI;
    Tipranavir => "TPV", PI;
}

#[cfg(feature = "serde")]
impl Serialize for DrugId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

#[cfg(feature = "serde")]
impl<'de> Deserialize<'de> for DrugId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <alloc::borrow::Cow<'de, str>>::deserialize(d)?;
        DrugId::from_code(&s).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for DrugId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for DrugId {
    type Err = UnknownDrug;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DrugId::from_code(s)
    }
}

/// Class of a drug given by its code.
pub fn drug_class(code: &str) -> Result<DrugClass, UnknownDrug> {
    DrugId::from_code(code).map(DrugId::class)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TherapyError {
    #[error("therapy `{0}` ends before it starts")]
    EndBeforeStart(String),
    #[error("therapy `{0}` has no drugs")]
    NoDrugs(String),
}

/// A drug regimen given to one patient over a period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Therapy {
    pub patient_id: String,
    pub therapy_id: String,
    pub start: Day,
    pub end: Option<Day>,
    pub drugs: BTreeSet<DrugId>,
}

impl Therapy {
    pub fn new(
        patient_id: impl Into<String>,
        therapy_id: impl Into<String>,
        start: Day,
        end: Option<Day>,
        drugs: impl IntoIterator<Item = DrugId>,
    ) -> Result<Self, TherapyError> {
        let therapy_id = therapy_id.into();
        let drugs: BTreeSet<DrugId> = drugs.into_iter().collect();
        if drugs.is_empty() {
            return Err(TherapyError::NoDrugs(therapy_id));
        }
        if matches!(end, Some(e) if e < start) {
            return Err(TherapyError::EndBeforeStart(therapy_id));
        }
        Ok(Therapy { patient_id: patient_id.into(), therapy_id, start, end, drugs })
    }

    pub fn has_class(&self, class: DrugClass) -> bool {
        self.drugs.iter().any(|d| d.class() == class)
    }

    /// Length in days when the therapy has a recorded end.
    pub fn duration_days(&self) -> Option<i32> {
        self.end.map(|e| e.days_since(self.start))
    }
}

/// A genotypic resistance test. An empty mutation set is a wild-type report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenotypeTest {
    pub patient_id: String,
    pub sample_date: Day,
    pub mutations: BTreeSet<MutationId>,
}

/// A plasma HIV RNA measurement in copies/ml.
#[derive(Debug, Clone, PartialEq)]
pub struct ViralLoad {
    pub patient_id: String,
    pub date: Day,
    pub copies_per_ml: f64,
}

/// Therapy outcome; failure is the positive class throughout the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Outcome {
    Success,
    Failure,
}

impl Outcome {
    /// `0` for success and `1` for failure.
    pub fn as_label(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Failure => 1,
        }
    }

    pub fn from_label(label: u8) -> Self {
        if label == 0 {
            Outcome::Success
        } else {
            Outcome::Failure
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Failure => "failure",
        }
    }
}

/// One eligible therapy together with the mutation history that precedes it.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientTherapyPair {
    pub therapy: Therapy,
    /// Every mutation seen in a genotype before the therapy start, mapped to
    /// the latest sample date that contained it.
    pub history_mutations: BTreeMap<MutationId, Day>,
    /// Mutations of the most recent pre-therapy genotype.
    pub baseline_mutations: BTreeSet<MutationId>,
    /// Date of the most recent pre-therapy genotype.
    pub baseline_date: Day,
    pub label: Outcome,
    /// More than one genotype precedes the therapy.
    pub has_prior_history: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use proptest::prelude::*;

    #[test]
    fn parses_reference_letter_forms() {
        let m = MutationId::parse("RTM184V").unwrap();
        assert_eq!((m.gene, m.position, m.amino_acid()), (Gene::RT, 184, 'V'));
        let m = MutationId::parse("PR90M").unwrap();
        assert_eq!((m.gene, m.position, m.amino_acid()), (Gene::PR, 90, 'M'));
        assert_eq!(MutationId::parse("RTT200K").unwrap(), MutationId::parse("RT200K").unwrap());
    }

    #[test]
    fn rejects_bad_tokens() {
        assert!(matches!(MutationId::parse("XX12A"), Err(MutationParseError::UnknownGene(_))));
        assert!(matches!(MutationId::parse("RT0A"), Err(MutationParseError::NonPositivePosition(_))));
        assert!(matches!(MutationId::parse("RTM-3A"), Err(MutationParseError::NonPositivePosition(_))));
        assert!(matches!(MutationId::parse("RT69ins"), Err(MutationParseError::Unsupported(_))));
        assert!(matches!(MutationId::parse("RT69del"), Err(MutationParseError::Unsupported(_))));
        assert!(matches!(MutationId::parse("RT184VI"), Err(MutationParseError::Unsupported(_))));
        assert!(matches!(MutationId::parse("RT184V/I"), Err(MutationParseError::Unsupported(_))));
        assert!(matches!(MutationId::parse("RTM184"), Err(MutationParseError::Malformed(_))));
        assert!(matches!(MutationId::parse("PR"), Err(MutationParseError::Malformed(_))));
        assert!(matches!(MutationId::parse("RT184Z"), Err(MutationParseError::Malformed(_))));
    }

    #[test]
    fn drug_classes() {
        assert_eq!(drug_class("DRV"), Ok(DrugClass::PI));
        assert_eq!(drug_class("3TC"), Ok(DrugClass::NRTI));
        assert_eq!(drug_class("DTG"), Ok(DrugClass::INI));
        assert_eq!(drug_class("EFV"), Ok(DrugClass::NNRTI));
        assert!(drug_class("XYZ").is_err());
    }

    #[test]
    fn drug_list_partitions_into_four_classes() {
        assert_eq!(DrugId::ALL.len(), 29);
        let classes: BTreeSet<_> = DrugId::ALL.iter().map(|d| d.class()).collect();
        assert_eq!(classes.len(), 4);
        let count = |c| DrugId::ALL.iter().filter(|d| d.class() == c).count();
        assert_eq!(count(DrugClass::PI), 9);
        assert_eq!(count(DrugClass::NRTI), 9);
        assert_eq!(count(DrugClass::NNRTI), 6);
        assert_eq!(count(DrugClass::INI), 5);
        for d in DrugId::ALL {
            assert_eq!(DrugId::from_code(d.code()), Ok(*d));
        }
    }

    #[test]
    fn therapy_validation() {
        assert!(Therapy::new("p", "t", Day(10), Some(Day(5)), [DrugId::Efavirenz]).is_err());
        assert!(Therapy::new("p", "t", Day(10), None, []).is_err());
        let t = Therapy::new("p", "t", Day(10), Some(Day(10)), [DrugId::Efavirenz, DrugId::Efavirenz]).unwrap();
        assert_eq!(t.drugs.len(), 1);
    }

    fn any_mutation() -> impl Strategy<Value = MutationId> {
        (0..3usize, 1u32..1000, 0..AMINO_ACIDS.len()).prop_map(|(g, p, a)| MutationId {
            gene: [Gene::PR, Gene::RT, Gene::IN][g],
            position: p,
            amino_acid: AMINO_ACIDS[a],
        })
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(m in any_mutation()) {
            prop_assert_eq!(MutationId::parse(&m.to_string()).unwrap(), m);
        }
    }
}
