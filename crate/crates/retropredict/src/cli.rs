//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use retropredict_core::features::DatasetVariant;

use crate::config::RunConfig;
use crate::error::{ExitStatus, Result};
use crate::pipeline::{Pipeline, Stage};

#[derive(Debug, Parser)]
#[command(name = "retropredict", version, about = "Therapy-outcome prediction from genotypic history")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Key-value configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Base seed; also seeds the synthetic cohort.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory shared by all stages.
    #[arg(long, global = true, value_name = "DIR", default_value = "retropredict-out")]
    pub out: PathBuf,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Restrict the run to these dataset variants (comma-separated).
    #[arg(long, global = true, value_delimiter = ',')]
    pub variant: Vec<DatasetVariant>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort into OUT/cohort.
    Simulate,
    /// Load and validate the cohort files.
    Ingest,
    /// Apply the outcome rules to every therapy.
    Label,
    /// Fit mutation persistence curves.
    FitPersistence,
    /// Split patients and dump every mutation weight.
    Weights,
    /// Write the dataset of every variant and split.
    BuildDatasets,
    /// Select C by cross-validation and fit the calibrated models.
    Train(TrainArgs),
    /// Score the test sets and write the comparison report.
    Evaluate,
    /// Rank mutations by their contribution to the trained model.
    Rank,
    /// Every stage in order, resuming after the last completed one.
    RunAll,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Number of random C candidates.
    #[arg(long, value_name = "N")]
    pub candidates: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

impl Cli {
    /// The configuration file with command-line overrides applied.
    pub fn config(&self) -> Result<RunConfig> {
        let mut config = match &self.common.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.common.seed {
            config.seed = seed;
            config.synth.seed = seed;
        }
        if let Some(threads) = self.common.threads {
            config.threads = threads;
        }
        if !self.common.variant.is_empty() {
            config.variants = self.common.variant.clone();
        }
        if let Command::Train(args) = &self.command {
            if let Some(n) = args.candidates {
                config.n_candidates = n;
            }
            if let Some(n) = args.folds {
                config.folds = n;
            }
            if let Some(n) = args.repeats {
                config.repeats = n;
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn execute(&self) -> Result<()> {
        let config = self.config()?;
        if config.threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build_global();
        }
        let pipeline = Pipeline::new(self.common.out.clone(), config);
        let stage = match &self.command {
            Command::RunAll => return pipeline.run_all(),
            Command::Simulate => Stage::Simulate,
            Command::Ingest => Stage::Ingest,
            Command::Label => Stage::Label,
            Command::FitPersistence => Stage::FitPersistence,
            Command::Weights => Stage::Weights,
            Command::BuildDatasets => Stage::BuildDatasets,
            Command::Train(_) => Stage::Train,
            Command::Evaluate => Stage::Evaluate,
            Command::Rank => Stage::Rank,
        };
        pipeline.run(stage)
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitStatus::Usage } else { ExitStatus::Ok };
        }
    };
    match cli.execute() {
        Ok(()) => ExitStatus::Ok,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_status()
        }
    }
}
