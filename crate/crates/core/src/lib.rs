//! Provably sufficient, subset-minimal explanations for binary
//! gradient-boosted tree classifiers.
//!
//! - [`dataset`]: typed CSV ingestion, one-hot encoding, top-k selection
//! - [`gbm`]: ensembles, margins, dump formats, split-count importance
//! - [`trainer`]: a small exact-greedy logistic booster
//! - [`solver`]: exact margin extrema over boxes and the counterexample query
//! - [`explain`]: deletion-based abductive explanations
//! - [`eval`]: synthetic-sample fidelity and report tables

pub mod dataset;
pub mod eval;
pub mod explain;
pub mod fixtures;
pub mod gbm;
pub mod solver;
pub mod trainer;

pub use dataset::{Dataset, FeatureSchema, Instance};
pub use explain::{explain, explain_batch, Explanation};
pub use gbm::{load_ensemble, Ensemble};
pub use solver::{flip_reachable, FeatureBox, Interval};
