//! Mining, tagging and analysis of software-quality concerns in issue
//! trackers.
//!
//! The pipeline runs in file-based stages: [`ingest`] parses event archives
//! into issue records, [`corpus`] cleans them and builds balanced datasets
//! and splits, [`classify`] trains the built-in per-quality models and tags
//! issues with a thresholded ensemble, [`evalstat`] scores and compares
//! classifiers, and [`analyze`] aggregates tagged issues per repository.

pub mod classify;
pub mod analyze;
pub mod cli;
pub mod corpus;
pub mod evalstat;
mod hash;
pub mod ingest;
pub mod quality;
pub mod serve;
pub mod table;

pub use hash::fnv1a64;
pub use quality::{QualityAttribute, QualitySet};
