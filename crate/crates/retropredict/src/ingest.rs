//! Cohort and score-table files.
//!
//! All files are tab-separated UTF-8 with a header row; lines starting with
//! `#` are skipped. Columns are matched by header name, so extra columns are
//! ignored. Diagnostics carry the 1-based line number of the offending row.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use retropredict_core::cohort::{BuildStats, CohortBuilder, CohortError, StanfordScoreTable};
use retropredict_core::domain::{Day, DrugId, GenotypeTest, MutationId, Therapy, ViralLoad};
use retropredict_core::Cohort;
use serde::Serialize;

use crate::error::{Error, Result};

pub const PATIENTS_FILE: &str = "patients.tsv";
pub const THERAPIES_FILE: &str = "therapies.tsv";
pub const GENOTYPES_FILE: &str = "genotypes.tsv";
pub const VIRAL_LOADS_FILE: &str = "viral_loads.tsv";
pub const SCORES_FILE: &str = "stanford_scores.tsv";

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date")
}

/// Parses an ISO-8601 calendar date (`YYYY-MM-DD`).
pub fn parse_date(s: &str) -> Option<Day> {
    let date = NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()?;
    i32::try_from((date - epoch()).num_days()).ok().map(Day)
}

pub fn format_date(day: Day) -> String {
    (epoch() + chrono::Duration::days(day.0 as i64)).format("%Y-%m-%d").to_string()
}

/// Paths of the five input files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortPaths {
    pub patients: PathBuf,
    pub therapies: PathBuf,
    pub genotypes: PathBuf,
    pub viral_loads: PathBuf,
    pub scores: PathBuf,
}

impl CohortPaths {
    pub fn in_dir(dir: &Path) -> Self {
        CohortPaths {
            patients: dir.join(PATIENTS_FILE),
            therapies: dir.join(THERAPIES_FILE),
            genotypes: dir.join(GENOTYPES_FILE),
            viral_loads: dir.join(VIRAL_LOADS_FILE),
            scores: dir.join(SCORES_FILE),
        }
    }
}

/// Counters gathered while loading a cohort.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub patients: usize,
    pub therapy_rows: usize,
    pub genotype_rows: usize,
    pub viral_load_rows: usize,
    pub score_rows: usize,
    pub clamped_viral_loads: usize,
    pub merged_genotypes: usize,
    pub merged_viral_loads: usize,
}

struct Table {
    file: String,
    reader: csv::Reader<File>,
    columns: Vec<usize>,
}

struct Record {
    row: u64,
    fields: Vec<String>,
}

impl Table {
    fn open(path: &Path, columns: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let name = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .comment(Some(b'#'))
            .flexible(true)
            .quoting(false)
            .from_reader(file);
        let header = reader
            .headers()
            .map_err(|e| Error::Row { file: name.clone(), row: 1, message: e.to_string() })?
            .clone();
        let mut indices = Vec::with_capacity(columns.len());
        for &c in columns {
            let i = header
                .iter()
                .position(|h| h.trim() == c)
                .ok_or_else(|| Error::MissingColumn { file: name.clone(), column: c.to_string() })?;
            indices.push(i);
        }
        Ok(Table { file: name, reader, columns: indices })
    }

    fn records(&mut self) -> Result<Vec<Record>> {
        let mut out = Vec::new();
        for rec in self.reader.records() {
            let rec = rec.map_err(|e| {
                let row = e.position().map(|p| p.line()).unwrap_or(0);
                Error::Row { file: self.file.clone(), row, message: e.to_string() }
            })?;
            let row = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.iter().all(|f| f.trim().is_empty()) {
                continue;
            }
            let fields = self
                .columns
                .iter()
                .map(|&i| {
                    rec.get(i).map(|s| s.trim().to_string()).ok_or_else(|| Error::Row {
                        file: self.file.clone(),
                        row,
                        message: format!("expected at least {} fields, found {}", i + 1, rec.len()),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(Record { row, fields });
        }
        Ok(out)
    }

    fn error(&self, row: u64, message: impl Into<String>) -> Error {
        Error::Row { file: self.file.clone(), row, message: message.into() }
    }

    fn date(&self, row: u64, s: &str) -> Result<Day> {
        parse_date(s).ok_or_else(|| self.error(row, format!("invalid date `{s}`")))
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(';').map(str::trim).filter(|t| !t.is_empty())
}

/// Loads and validates a cohort; viral loads below `assay_floor` are
/// clamped to it.
pub fn load_cohort(paths: &CohortPaths, assay_floor: f64) -> Result<(Cohort, IngestReport)> {
    let mut builder = CohortBuilder::new(assay_floor);
    let mut report = IngestReport::default();

    let mut t = Table::open(&paths.patients, &["patient_id"])?;
    for r in t.records()? {
        if r.fields[0].is_empty() {
            return Err(t.error(r.row, "empty patient_id"));
        }
        builder.add_patient(r.fields[0].clone());
    }

    let integrity = |t: &Table, row: u64, e: CohortError| match e {
        CohortError::UnknownPatient(patient) => Error::ReferentialIntegrity { file: t.file.clone(), row, patient },
        other => t.error(row, other.to_string()),
    };

    let mut t = Table::open(&paths.therapies, &["patient_id", "therapy_id", "start_date", "end_date", "drugs"])?;
    for r in t.records()? {
        let [patient, therapy_id, start, end, drugs] = &r.fields[..] else { unreachable!() };
        let start = t.date(r.row, start)?;
        let end = if end.is_empty() { None } else { Some(t.date(r.row, end)?) };
        let drugs = split_list(drugs)
            .map(|d| DrugId::from_code(d).map_err(|e| t.error(r.row, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let therapy = Therapy::new(patient.clone(), therapy_id.clone(), start, end, drugs)
            .map_err(|e| t.error(r.row, e.to_string()))?;
        if builder.has_therapy(therapy_id) {
            return Err(Error::DuplicateTherapy { file: t.file.clone(), row: r.row, therapy: therapy_id.clone() });
        }
        builder.add_therapy(therapy).map_err(|e| integrity(&t, r.row, e))?;
        report.therapy_rows += 1;
    }

    let mut t = Table::open(&paths.genotypes, &["patient_id", "sample_date", "mutations"])?;
    for r in t.records()? {
        let mutations = split_list(&r.fields[2])
            .map(|m| MutationId::parse(m).map_err(|e| t.error(r.row, e.to_string())))
            .collect::<Result<BTreeSet<_>>>()?;
        let g = GenotypeTest { patient_id: r.fields[0].clone(), sample_date: t.date(r.row, &r.fields[1])?, mutations };
        builder.add_genotype(g).map_err(|e| integrity(&t, r.row, e))?;
        report.genotype_rows += 1;
    }

    let mut t = Table::open(&paths.viral_loads, &["patient_id", "date", "copies_per_ml"])?;
    for r in t.records()? {
        let copies: f64 = r.fields[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| t.error(r.row, format!("invalid copies_per_ml `{}`", r.fields[2])))?;
        let v = ViralLoad { patient_id: r.fields[0].clone(), date: t.date(r.row, &r.fields[1])?, copies_per_ml: copies };
        builder.add_viral_load(v).map_err(|e| integrity(&t, r.row, e))?;
        report.viral_load_rows += 1;
    }

    let (cohort, stats): (Cohort, BuildStats) = builder.build()?;
    report.patients = cohort.patient_count();
    report.clamped_viral_loads = stats.clamped_viral_loads;
    report.merged_genotypes = stats.merged_genotypes;
    report.merged_viral_loads = stats.merged_viral_loads;
    Ok((cohort, report))
}

/// Loads `mutation, drug, score` rows. Repeating a pair with the same score
/// is accepted; a different score is an error.
pub fn load_stanford_table(path: &Path) -> Result<(StanfordScoreTable, usize)> {
    let mut t = Table::open(path, &["mutation", "drug", "score"])?;
    let mut table = StanfordScoreTable::new();
    let mut rows = 0;
    for r in t.records()? {
        let m = MutationId::parse(&r.fields[0]).map_err(|e| t.error(r.row, e.to_string()))?;
        let d = DrugId::from_code(&r.fields[1]).map_err(|e| t.error(r.row, e.to_string()))?;
        let s: i32 = r.fields[2].parse().map_err(|_| t.error(r.row, format!("invalid score `{}`", r.fields[2])))?;
        table
            .insert(m, d, s)
            .map_err(|source| Error::ScoreTable { file: t.file.clone(), row: r.row, source })?;
        rows += 1;
    }
    Ok((table, rows))
}

/// Loads the cohort and the score table from one directory.
pub fn load_dir(dir: &Path, assay_floor: f64) -> Result<(Cohort, StanfordScoreTable, IngestReport)> {
    let paths = CohortPaths::in_dir(dir);
    let (cohort, mut report) = load_cohort(&paths, assay_floor)?;
    let (table, rows) = load_stanford_table(&paths.scores)?;
    report.score_rows = rows;
    Ok((cohort, table, report))
}

/// Raw cohort records in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CohortRecords {
    pub patients: Vec<String>,
    pub therapies: Vec<Therapy>,
    pub genotypes: Vec<GenotypeTest>,
    pub viral_loads: Vec<ViralLoad>,
    pub scores: StanfordScoreTable,
}

impl CohortRecords {
    /// Builds the cohort directly, as if the records had been written and
    /// loaded again.
    pub fn build(&self, assay_floor: f64) -> Result<Cohort> {
        let mut builder = CohortBuilder::new(assay_floor);
        for p in &self.patients {
            builder.add_patient(p.clone());
        }
        for t in &self.therapies {
            builder.add_therapy(t.clone())?;
        }
        for g in &self.genotypes {
            builder.add_genotype(g.clone())?;
        }
        for v in &self.viral_loads {
            builder.add_viral_load(v.clone())?;
        }
        Ok(builder.build()?.0)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes a text file through `body`, creating parent directories.
pub fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

/// Writes the five input files into `dir`.
pub fn write_cohort(dir: &Path, records: &CohortRecords) -> Result<()> {
    let paths = CohortPaths::in_dir(dir);
    write_file(&paths.patients, |w| {
        writeln!(w, "patient_id")?;
        records.patients.iter().try_for_each(|p| writeln!(w, "{p}"))
    })?;
    write_file(&paths.therapies, |w| {
        writeln!(w, "patient_id\ttherapy_id\tstart_date\tend_date\tdrugs")?;
        for t in &records.therapies {
            let end = t.end.map(format_date).unwrap_or_default();
            writeln!(w, "{}\t{}\t{}\t{}\t{}", t.patient_id, t.therapy_id, format_date(t.start), end, join(&t.drugs))?;
        }
        Ok(())
    })?;
    write_file(&paths.genotypes, |w| {
        writeln!(w, "patient_id\tsample_date\tmutations")?;
        for g in &records.genotypes {
            writeln!(w, "{}\t{}\t{}", g.patient_id, format_date(g.sample_date), join(&g.mutations))?;
        }
        Ok(())
    })?;
    write_file(&paths.viral_loads, |w| {
        writeln!(w, "patient_id\tdate\tcopies_per_ml")?;
        for v in &records.viral_loads {
            writeln!(w, "{}\t{}\t{}", v.patient_id, format_date(v.date), v.copies_per_ml)?;
        }
        Ok(())
    })?;
    write_file(&paths.scores, |w| {
        writeln!(w, "mutation\tdrug\tscore")?;
        records.scores.iter().try_for_each(|(m, d, s)| writeln!(w, "{m}\t{d}\t{s}"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dates_round_trip() {
        assert_eq!(parse_date("1970-01-02"), Some(Day(1)));
        assert_eq!(parse_date("1969-12-31"), Some(Day(-1)));
        assert_eq!(format_date(Day(10_957)), "2000-01-01");
        assert_eq!(parse_date("2000-02-30"), None);
        assert_eq!(parse_date("01/02/2000"), None);
    }
}
