//! Subset-minimal abductive explanations by linear deletion.
//!
//! Starting with every feature pinned to the instance's value, features are
//! freed one at a time in ascending order of split-count importance. A freed
//! feature stays free when no assignment of the free features can change the
//! class, and is pinned back otherwise. Features that occur in no split are
//! freed without a query.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Instance;
use crate::gbm::Ensemble;
use crate::solver::flip_reachable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub instance: Instance,
    pub predicted_class: u8,
    /// Pinned features with their values, in feature order.
    pub retained: Vec<(usize, f64)>,
    /// Freed features, in the order they were freed.
    pub dropped: Vec<usize>,
    /// Seconds spent computing the explanation.
    pub wall_time: f64,
    pub query_count: usize,
}

impl Explanation {
    pub fn size(&self) -> usize {
        self.retained.len()
    }

    pub fn retained_ids(&self) -> Vec<usize> {
        self.retained.iter().map(|&(f, _)| f).collect()
    }

    /// `name = value` pairs joined by commas.
    pub fn render(&self, names: &[String]) -> String {
        render_pairs(names, &self.retained)
    }
}

pub fn render_pairs(names: &[String], pairs: &[(usize, f64)]) -> String {
    pairs
        .iter()
        .map(|&(f, v)| format!("{} = {v}", names[f]))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Features by ascending split count, ties in feature order.
pub fn removal_order(ensemble: &Ensemble) -> Vec<usize> {
    let counts = ensemble.split_counts();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&f| counts[f]);
    order
}

pub fn explain(ensemble: &Ensemble, instance: &Instance) -> Explanation {
    let start = Instant::now();
    let n = ensemble.num_features();
    assert_eq!(
        instance.len(),
        n,
        "instance does not match the ensemble's features"
    );
    let predicted_class = ensemble.predict_class(&instance.values);
    let counts = ensemble.split_counts();

    let mut pinned = vec![true; n];
    let mut dropped = Vec::new();
    let mut query_count = 0;
    for f in removal_order(ensemble) {
        pinned[f] = false;
        if counts[f] > 0 {
            let fixed: Vec<usize> = (0..n).filter(|&g| pinned[g]).collect();
            query_count += 1;
            if flip_reachable(ensemble, instance, &fixed).reachable {
                pinned[f] = true;
                continue;
            }
        }
        dropped.push(f);
    }
    let retained = (0..n)
        .filter(|&f| pinned[f])
        .map(|f| (f, instance.values[f]))
        .collect();
    Explanation {
        instance: instance.clone(),
        predicted_class,
        retained,
        dropped,
        wall_time: start.elapsed().as_secs_f64(),
        query_count,
    }
}

/// Explains every row, in row order. Rows may be processed in parallel.
pub fn explain_batch(
    ensemble: &Ensemble,
    rows: &[Instance],
) -> Vec<Result<Explanation, ExplainError>> {
    rows.par_iter()
        .enumerate()
        .map(|(row, x)| {
            if x.len() != ensemble.num_features() {
                return Err(ExplainError::Row {
                    row,
                    reason: format!(
                        "expected {} values, found {}",
                        ensemble.num_features(),
                        x.len()
                    ),
                });
            }
            if let Some(v) = x.values.iter().find(|v| !v.is_finite()) {
                return Err(ExplainError::Row {
                    row,
                    reason: format!("non-finite value {v}"),
                });
            }
            Ok(explain(ensemble, x))
        })
        .collect()
}

/// Sufficiency and minimality check of a set of pinned features.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub sufficient: bool,
    /// Retained features whose removal keeps the set sufficient.
    pub redundant: Vec<usize>,
}

impl Certificate {
    pub fn holds(&self) -> bool {
        self.sufficient && self.redundant.is_empty()
    }
}

pub fn certify(ensemble: &Ensemble, instance: &Instance, retained: &[usize]) -> Certificate {
    let sufficient = !flip_reachable(ensemble, instance, retained).reachable;
    let redundant = retained
        .iter()
        .filter(|&&f| {
            let rest: Vec<usize> = retained.iter().copied().filter(|&g| g != f).collect();
            !flip_reachable(ensemble, instance, &rest).reachable
        })
        .copied()
        .collect();
    Certificate {
        sufficient,
        redundant,
    }
}
