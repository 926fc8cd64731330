use std::path::PathBuf;

use retropredict_core::cohort::{CohortError, ScoreTableError};
use retropredict_core::features::FeatureError;
use retropredict_core::learner::LearnerError;
use retropredict_core::persistence::PersistenceError;
use retropredict_core::ranking::RankingError;
use retropredict_core::stats::StatsError;
use retropredict_core::weighting::WeightError;

/// Process exit status for each error category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    Usage = 1,
    Data = 2,
    Numeric = 3,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("missing input file {0}")]
    MissingFile(PathBuf),
    #[error("{file} row {row}: {message}")]
    Row { file: String, row: u64, message: String },
    #[error("{file} row {row}: record references unknown patient `{patient}`")]
    ReferentialIntegrity { file: String, row: u64, patient: String },
    #[error("{file} row {row}: duplicate therapy id `{therapy}`")]
    DuplicateTherapy { file: String, row: u64, therapy: String },
    #[error("{file} row {row}: {source}")]
    ScoreTable { file: String, row: u64, source: ScoreTableError },
    #[error("{file}: missing column `{column}` in header")]
    MissingColumn { file: String, column: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Persistence(#[from] PersistenceError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error("stage `{stage}` needs `{missing}`; run the earlier stages first")]
    MissingStage { stage: &'static str, missing: String },
    #[error("invalid synthetic configuration: {0}")]
    Synth(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub fn exit_status(&self) -> ExitStatus {
        match self {
            Error::Usage(_) | Error::Config { .. } | Error::Synth(_) | Error::MissingStage { .. } => ExitStatus::Usage,
            Error::Learner(LearnerError::NumericFailure) => ExitStatus::Numeric,
            Error::Features(FeatureError::Weight { source: WeightError::DegenerateDenominator, .. }) => ExitStatus::Numeric,
            Error::Stats(StatsError::NonFinite) => ExitStatus::Numeric,
            _ => ExitStatus::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
