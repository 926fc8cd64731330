//! Core algorithms for predicting antiretroviral therapy outcome from a
//! patient's genotypic history.
//!
//! The crate is `no_std` and only needs an allocator. File formats, the
//! synthetic cohort generator and the command line live in the companion
//! `retropredict` crate.
//!
//! Pipeline overview:
//!
//! 1. [`cohort`] holds the validated patient records and decides which
//!    therapies are eligible for modelling.
//! 2. [`labeling`] maps each therapy to success, failure or exclusion.
//! 3. [`persistence`] learns how quickly mutations vanish from plasma once
//!    drug pressure stops.
//! 4. [`weighting`] turns viral load, elapsed time and resistance scores into
//!    a per-mutation weight.
//! 5. [`features`] assembles the dataset variants; [`learner`] trains the
//!    calibrated linear SVMs; [`stats`] and [`ranking`] evaluate them.
#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod cohort;
pub mod domain;
pub mod features;
pub mod labeling;
pub mod learner;
pub mod math;
pub mod persistence;
pub mod ranking;
pub mod stats;
pub mod weighting;

pub use cohort::{Cohort, CohortBuilder, StanfordScoreTable};
pub use domain::{Day, DrugClass, DrugId, Gene, MutationId, Therapy};
