//! File formats, synthetic cohorts, experiment orchestration and the command
//! line for the `retropredict` pipeline.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod ingest;
pub mod json;
pub mod pipeline;
pub mod synth;

pub use error::{Error, ExitStatus, Result};
