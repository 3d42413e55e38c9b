//! Core library for harvesting YARA sub-signatures and using them as
//! features for malware classification.
//!
//! The pipeline stages live in their own modules:
//!
//! - [`harvest`]: parse rule files, decode string definitions, build the
//!   sub-signature catalog.
//! - [`scanner`]: compile the catalog into a multi-pattern automaton and scan
//!   a corpus into a sparse binary occurrence matrix.
//! - [`dataset`]: corpus manifests, side feature tables, and row-aligned
//!   train/test views.
//! - [`selection`]: L1-regularized logistic regression for picking the most
//!   useful sub-signatures, with optional side-information columns.
//! - [`boosting`]: gradient-boosted decision trees plus an unpenalized
//!   linear learner for the final classifiers.
//! - [`analysis`]: per-feature statistics, ROC/partial-AUC evaluation, ECDFs,
//!   correlation, and cross-block projection diagnostics.
//! - [`synth`]: seeded synthetic corpus generation for experiments.
//! - [`pipeline`]: end-to-end orchestration and artifact management.

pub mod analysis;
pub mod boosting;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod harvest;
pub mod pipeline;
pub mod scanner;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Execution;
