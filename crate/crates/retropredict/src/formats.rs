//! Tab-separated stage outputs.
//!
//! Floats are written in Rust's shortest round-trip form, so every file read
//! back by a later stage reproduces the values that were written.

use std::path::Path;

use retropredict_core::cohort::Cohort;
use retropredict_core::domain::{DrugId, MutationId, Outcome};
use retropredict_core::features::{DatasetVariant, FeatureUniverse, LabeledDataset, Row, SparseVector, WeightRecord};
use retropredict_core::labeling::{label_therapy, LabelValue};
use retropredict_core::persistence::{FitRecord, PersistenceModel};
use retropredict_core::ranking::RankingEntry;
use retropredict_core::stats::RocPoint;

use crate::error::{Error, Result};
use crate::ingest::{format_date, write_file};

pub const LABELS_FILE: &str = "labels.tsv";
pub const FITS_FILE: &str = "persistence_fits.tsv";
pub const WEIGHTS_FILE: &str = "weights.tsv";
pub const DATASET_FILE: &str = "dataset.tsv";
pub const COLUMNS_FILE: &str = "columns.tsv";
pub const ROWS_FILE: &str = "rows.tsv";
pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const ROC_FILE: &str = "roc_points.tsv";
pub const RANKING_FILE: &str = "ranking.tsv";
pub const SCREE_FILE: &str = "scree.tsv";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// The outcome rules applied to every therapy, with the eligibility verdict
/// in the last column (`eligible` or the reason for rejection).
pub fn write_labels(path: &Path, cohort: &Cohort) -> Result<()> {
    let eligibility = retropredict_core::cohort::eligible_pairs(cohort);
    let mut verdict = std::collections::BTreeMap::new();
    for e in &eligibility.accepted {
        verdict.insert(e.therapy.therapy_id.as_str(), "eligible");
    }
    for r in &eligibility.rejected {
        verdict.insert(r.therapy.therapy_id.as_str(), r.reason.code());
    }
    write_file(path, |w| {
        writeln!(w, "therapy_id\tlabel\trule_fired\tdeciding_vl_date\tdeciding_vl\texclusion\teligibility")?;
        for (patient, therapy) in cohort.therapies() {
            let l = label_therapy(therapy, &patient.viral_loads);
            let label = match l.value {
                LabelValue::Success => "0",
                LabelValue::Failure => "1",
                LabelValue::Excluded => "excluded",
            };
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                therapy.therapy_id,
                label,
                opt(l.rule_fired.map(|r| r.as_str())),
                opt(l.deciding_vl.map(|(d, _)| format_date(d))),
                opt(l.deciding_vl.map(|(_, v)| v)),
                opt(l.exclusion().map(|e| e.as_str())),
                verdict.get(therapy.therapy_id.as_str()).copied().unwrap_or(""),
            )?;
        }
        Ok(())
    })
}

/// Per-mutation fit diagnostics next to the parameters finally used.
pub fn write_fits(path: &Path, fits: &[FitRecord], model: &PersistenceModel) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "mutation\tclass\tobservations\tfit_alpha\tfit_beta\tfit_nll\talpha\tbeta\tprovenance")?;
        for f in fits {
            let p = model.params(f.mutation);
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                f.mutation,
                f.class,
                f.observations,
                opt(f.fit.map(|s| s.intercept)),
                opt(f.fit.map(|s| s.slope)),
                opt(f.fit.map(|s| s.nll)),
                opt(p.map(|p| p.alpha)),
                opt(p.map(|p| p.beta)),
                opt(p.map(|p| p.provenance.as_str())),
            )?;
        }
        Ok(())
    })
}

pub fn write_weights(path: &Path, records: &[WeightRecord]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "therapy_id\tmutation\tt_days\traw_area\tnormalized_area\tS\tweight")?;
        for r in records {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.therapy_id, r.mutation, r.t_days, r.raw_area, r.normalized_area, r.stanford, r.weight
            )?;
        }
        Ok(())
    })
}

/// Which side of the patient split a dataset row falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Train,
    Test,
}

impl Side {
    fn as_str(self) -> &'static str {
        match self {
            Side::Train => "train",
            Side::Test => "test",
        }
    }
}

/// Writes `dataset.tsv`, `columns.tsv` and `rows.tsv` into `dir`.
pub fn write_dataset(dir: &Path, data: &LabeledDataset, side: impl Fn(&Row) -> Side) -> Result<()> {
    write_file(&dir.join(DATASET_FILE), |w| {
        writeln!(w, "row_id\tfeature_index\tvalue")?;
        for (i, r) in data.rows.iter().enumerate() {
            for &(j, v) in r.features.iter() {
                writeln!(w, "{i}\t{j}\t{v}")?;
            }
        }
        Ok(())
    })?;
    write_file(&dir.join(COLUMNS_FILE), |w| {
        writeln!(w, "index\tname\tkind")?;
        for j in 0..data.universe.len() as u32 {
            let kind = if data.universe.is_mutation(j) { "mutation" } else { "drug" };
            writeln!(w, "{j}\t{}\t{kind}", data.universe.name(j))?;
        }
        Ok(())
    })?;
    write_file(&dir.join(ROWS_FILE), |w| {
        writeln!(w, "row_id\ttherapy_id\tpatient_id\tlabel\thas_prior_history\tsplit")?;
        for (i, r) in data.rows.iter().enumerate() {
            writeln!(
                w,
                "{i}\t{}\t{}\t{}\t{}\t{}",
                r.therapy_id,
                r.patient_id,
                r.label.as_label(),
                u8::from(r.has_prior_history),
                side(r).as_str()
            )?;
        }
        Ok(())
    })
}

fn tsv(path: &Path) -> Result<(String, csv::Reader<std::fs::File>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    Ok((name, csv::ReaderBuilder::new().delimiter(b'\t').quoting(false).from_reader(file)))
}

fn records(path: &Path, width: usize) -> Result<Vec<(u64, Vec<String>)>> {
    let (name, mut reader) = tsv(path)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })?;
        let row = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() < width {
            return Err(Error::Row { file: name, row, message: format!("expected {width} fields, found {}", rec.len()) });
        }
        out.push((row, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(path: &Path, row: u64, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Row {
        file: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        row,
        message: format!("cannot parse `{value}`"),
    })
}

/// Reads a dataset written by [`write_dataset`] and returns it with the
/// split side of every row.
pub fn read_dataset(dir: &Path, variant: DatasetVariant) -> Result<(LabeledDataset, Vec<Side>)> {
    let columns_path = dir.join(COLUMNS_FILE);
    let mut universe = FeatureUniverse::default();
    for (i, (row, f)) in records(&columns_path, 3)?.into_iter().enumerate() {
        if field::<usize>(&columns_path, row, &f[0])? != i {
            return Err(Error::Row { file: COLUMNS_FILE.into(), row, message: "column indices must be consecutive".into() });
        }
        match f[2].as_str() {
            "mutation" => universe.mutations.push(field::<MutationId>(&columns_path, row, &f[1])?),
            "drug" => universe.drugs.push(field::<DrugId>(&columns_path, row, &f[1])?),
            other => return Err(Error::Row { file: COLUMNS_FILE.into(), row, message: format!("unknown column kind `{other}`") }),
        }
    }

    let rows_path = dir.join(ROWS_FILE);
    let mut rows = Vec::new();
    let mut sides = Vec::new();
    for (i, (row, f)) in records(&rows_path, 6)?.into_iter().enumerate() {
        if field::<usize>(&rows_path, row, &f[0])? != i {
            return Err(Error::Row { file: ROWS_FILE.into(), row, message: "row ids must be consecutive".into() });
        }
        let label = match f[3].as_str() {
            "0" => Outcome::Success,
            "1" => Outcome::Failure,
            other => return Err(Error::Row { file: ROWS_FILE.into(), row, message: format!("label must be 0 or 1, got `{other}`") }),
        };
        let side = match f[5].as_str() {
            "train" => Side::Train,
            "test" => Side::Test,
            other => return Err(Error::Row { file: ROWS_FILE.into(), row, message: format!("unknown split `{other}`") }),
        };
        rows.push(Row {
            therapy_id: f[1].clone(),
            patient_id: f[2].clone(),
            label,
            has_prior_history: f[4] == "1",
            features: SparseVector::default(),
        });
        sides.push(side);
    }

    let data_path = dir.join(DATASET_FILE);
    let mut entries: Vec<Vec<(u32, f64)>> = vec![Vec::new(); rows.len()];
    for (row, f) in records(&data_path, 3)? {
        let i: usize = field(&data_path, row, &f[0])?;
        let j: u32 = field(&data_path, row, &f[1])?;
        let v: f64 = field(&data_path, row, &f[2])?;
        if i >= rows.len() || j as usize >= universe.len() {
            return Err(Error::Row { file: DATASET_FILE.into(), row, message: format!("entry ({i}, {j}) out of range") });
        }
        entries[i].push((j, v));
    }
    for (r, e) in rows.iter_mut().zip(entries) {
        r.features = SparseVector::from_entries(e);
    }
    Ok((LabeledDataset { variant, universe, rows }, sides))
}

pub fn write_predictions(path: &Path, rows: &[Row], probs: &[f64], threshold: f64) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "therapy_id\tpatient_id\tlabel\tp_failure\tpredicted")?;
        for (r, &p) in rows.iter().zip(probs) {
            writeln!(w, "{}\t{}\t{}\t{p}\t{}", r.therapy_id, r.patient_id, r.label.as_label(), u8::from(p >= threshold))?;
        }
        Ok(())
    })
}

pub fn write_roc(path: &Path, points: &[RocPoint]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "threshold\tfpr\ttpr")?;
        points.iter().try_for_each(|p| writeln!(w, "{}\t{}\t{}", p.threshold, p.fpr, p.tpr))
    })
}

/// `selected` entries lie strictly before the elbow.
pub fn write_ranking(path: &Path, entries: &[RankingEntry], elbow: usize) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "rank\tmutation\tcoefficient\tL\tz_coefficient\tz_L\tranking_value\tselected")?;
        for (i, e) in entries.iter().enumerate() {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                i + 1,
                e.mutation,
                e.coefficient,
                e.neg_log_weight_sum,
                e.coef_abs_z,
                e.neg_log_weight_sum_z,
                e.ranking_value,
                u8::from(i < elbow)
            )?;
        }
        Ok(())
    })
}

pub fn write_scree(path: &Path, entries: &[RankingEntry], elbow: usize) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "rank\tabs_ranking_value\telbow")?;
        for (i, e) in entries.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}", i + 1, e.ranking_value.abs(), u8::from(i == elbow))?;
        }
        Ok(())
    })
}
