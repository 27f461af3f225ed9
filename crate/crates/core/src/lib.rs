//! Classification of free-text pathology reports into ICD-O breast-cancer
//! topography codes (C50.x), using a flat multiclass CNN and a two-level
//! hierarchical ensemble of specialized CNN classifiers.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`corpus`] — report ingestion (XML/JSONL), class-inclusion policy,
//!   stratified splits, cross-validation folds, seeded synthetic corpora.
//! - [`textprep`] — token cleaning, top-K TF-IDF vocabulary selection,
//!   fixed-length index encoding.
//! - [`nncore`] — dense-array layer forward/backward rules, Adadelta,
//!   seeded initialization, finite-difference gradient verification.
//! - [`cnnmodel`] — the convolutional classifier, mini-batch training with
//!   validation-based model selection, binary checkpoints.
//! - [`hierarchy`] — class-grouping suggestion from confusion data, the
//!   parent/child ensemble, routed prediction and paired evaluation.
//! - [`metrics`] — confusion matrices, F1-micro/macro, bootstrap intervals.
//!
//! Everything is deterministic per seed: the same inputs and master seed
//! produce bit-identical artifacts. With the `parallel` feature (on by
//! default) the heavy inner loops run on rayon, but every parallel path is a
//! gather over independent output cells with a fixed inner summation order,
//! so results remain bit-identical to the sequential build.

pub mod cnnmodel;
pub mod corpus;
pub mod error;
pub mod hierarchy;
pub mod metrics;
pub mod nncore;
pub(crate) mod par;
pub mod textprep;

pub use error::{Error, Result};
