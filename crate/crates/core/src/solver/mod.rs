//! Exact reasoning over an ensemble restricted to a box of feature values.
//!
//! The central question is whether some point of a box reaches the class
//! opposite to an instance's prediction, which is decided by computing the
//! exact maximum or minimum margin over the box. Given a box, trees are
//! independent: each contributes one of its reachable leaves, so summing
//! every tree's best reachable leaf bounds the margin. A depth-first
//! branch-and-bound refines the box along thresholds until every tree has a
//! single reachable leaf.

mod brute;
mod interval;
pub mod smt;

pub use brute::{brute_force_optimum, brute_force_optimum_with_cap, DEFAULT_CELL_CAP};
pub use interval::Interval;
pub use smt::export_smt2;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::Instance;
use crate::gbm::{class_of, Cmp, Ensemble, Literal, Node, PathImplication, Tree};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("box has {got} intervals, ensemble has {expected} features")]
    Dimension { expected: usize, got: usize },
    #[error("box contains no representable point")]
    EmptyBox,
    #[error("brute force needs {cells} cells, cap is {cap}")]
    CapExceeded { cells: u128, cap: u128 },
}

/// One interval per feature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureBox {
    intervals: Vec<Interval>,
}

impl FeatureBox {
    pub fn new(intervals: Vec<Interval>) -> Self {
        FeatureBox { intervals }
    }

    pub fn full(n: usize) -> Self {
        FeatureBox::new(vec![Interval::FULL; n])
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn get(&self, feature: usize) -> &Interval {
        &self.intervals[feature]
    }

    pub fn set(&mut self, feature: usize, interval: Interval) {
        self.intervals[feature] = interval;
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.intervals.len() && self.intervals.iter().zip(x).all(|(i, &v)| i.contains(v))
    }

    pub fn is_subset_of(&self, other: &FeatureBox) -> bool {
        self.intervals
            .iter()
            .zip(&other.intervals)
            .all(|(a, b)| a.is_subset_of(b))
    }

    /// Per-feature representative point.
    pub fn representative(&self) -> Option<Instance> {
        self.intervals
            .iter()
            .map(Interval::representative)
            .collect::<Option<Vec<_>>>()
            .map(Instance::new)
    }
}

/// Pins the `fixed` features to their values in `instance`; every other
/// feature ranges over the whole line.
pub fn box_from_instance(instance: &Instance, fixed: &[usize]) -> FeatureBox {
    let mut b = FeatureBox::full(instance.len());
    for &f in fixed {
        b.set(f, Interval::point(instance.values[f]));
    }
    b
}

/// Root-to-leaf paths of `tree` whose threshold tests are jointly
/// satisfiable inside `domain`.
pub fn reachable_leaves(tree: &Tree, domain: &FeatureBox) -> Vec<PathImplication> {
    fn go(
        nodes: &[Node],
        id: usize,
        domain: &mut FeatureBox,
        prefix: &mut Vec<Literal>,
        out: &mut Vec<PathImplication>,
    ) {
        match nodes[id] {
            Node::Leaf { value } => out.push(PathImplication {
                antecedent: prefix.clone(),
                leaf: value,
            }),
            Node::Split {
                feature,
                threshold,
                below,
                at_or_above,
            } => {
                let saved = *domain.get(feature);
                for (cmp, child) in [(Cmp::Lt, below), (Cmp::Ge, at_or_above)] {
                    let narrowed = match cmp {
                        Cmp::Lt if saved.meets_below(threshold) => saved.restrict_below(threshold),
                        Cmp::Ge if saved.meets_at_or_above(threshold) => {
                            saved.restrict_at_or_above(threshold)
                        }
                        _ => continue,
                    };
                    domain.set(feature, narrowed);
                    prefix.push(Literal {
                        feature,
                        cmp,
                        threshold,
                    });
                    go(nodes, child, domain, prefix, out);
                    prefix.pop();
                    domain.set(feature, saved);
                }
            }
        }
    }
    let mut out = Vec::new();
    let mut scratch = domain.clone();
    go(tree.nodes(), 0, &mut scratch, &mut Vec::new(), &mut out);
    out
}

/// An attained extremum of the margin with a witness point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extremum {
    pub value: f64,
    pub witness: Instance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginBound {
    pub lower: f64,
    pub upper: f64,
    pub attained_lower: Instance,
    pub attained_upper: Instance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sense {
    Max,
    Min,
}

impl Sense {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Sense::Max => a > b,
            Sense::Min => a < b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Goal {
    /// Find the exact optimum.
    Optimum,
    /// Stop at the first point of the opposite class: margin > 0 when
    /// maximizing, margin <= 0 when minimizing.
    Cross,
}

/// Best reachable leaf per tree plus how many leaves are reachable.
#[derive(Clone, Copy)]
struct TreeBound {
    best: f64,
    reachable: usize,
}

struct Search<'a> {
    ensemble: &'a Ensemble,
    sense: Sense,
    goal: Goal,
    trees_by_feature: Vec<Vec<usize>>,
    best: Option<Extremum>,
    nodes: u64,
}

impl<'a> Search<'a> {
    fn new(ensemble: &'a Ensemble, sense: Sense, goal: Goal) -> Self {
        let mut trees_by_feature = vec![Vec::new(); ensemble.num_features()];
        for (h, tree) in ensemble.trees().iter().enumerate() {
            for node in tree.nodes() {
                if let Node::Split { feature, .. } = *node {
                    if trees_by_feature[feature].last() != Some(&h) {
                        trees_by_feature[feature].push(h);
                    }
                }
            }
        }
        Search {
            ensemble,
            sense,
            goal,
            trees_by_feature,
            best: None,
            nodes: 0,
        }
    }

    fn tree_bound(
        &self,
        tree: &Tree,
        domain: &FeatureBox,
        splits: Option<&mut Vec<(usize, f64)>>,
    ) -> TreeBound {
        let nodes = tree.nodes();
        let mut best: Option<f64> = None;
        let mut reachable = 0;
        let mut stack = vec![0usize];
        let mut splits = splits;
        while let Some(id) = stack.pop() {
            match nodes[id] {
                Node::Leaf { value } => {
                    reachable += 1;
                    if best.is_none_or(|b| self.sense.better(value, b)) {
                        best = Some(value);
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    below,
                    at_or_above,
                } => {
                    let iv = domain.get(feature);
                    let (lo, hi) = (iv.meets_below(threshold), iv.meets_at_or_above(threshold));
                    if lo && hi {
                        if let Some(s) = splits.as_deref_mut() {
                            s.push((feature, threshold));
                        }
                    }
                    if hi {
                        stack.push(at_or_above);
                    }
                    if lo {
                        stack.push(below);
                    }
                }
            }
        }
        TreeBound {
            best: best.expect("a non-empty box reaches at least one leaf"),
            reachable,
        }
    }

    fn total(&self, bounds: &[TreeBound]) -> f64 {
        bounds
            .iter()
            .fold(self.ensemble.init(), |acc, b| acc + b.best)
    }

    fn hopeless(&self, bound: f64) -> bool {
        match (self.goal, self.sense) {
            (Goal::Cross, Sense::Max) => bound <= 0.0,
            (Goal::Cross, Sense::Min) => bound > 0.0,
            (Goal::Optimum, _) => self
                .best
                .as_ref()
                .is_some_and(|b| !self.sense.better(bound, b.value)),
        }
    }

    fn done(&self) -> bool {
        self.goal == Goal::Cross && self.best.is_some()
    }

    /// Bound of `domain` with `feature` replaced by `interval`, recomputing
    /// only the trees that test it.
    fn child_bound(
        &self,
        domain: &mut FeatureBox,
        bounds: &[TreeBound],
        feature: usize,
        interval: Interval,
    ) -> f64 {
        let saved = *domain.get(feature);
        domain.set(feature, interval);
        let mut child = bounds.to_vec();
        for &h in &self.trees_by_feature[feature] {
            child[h] = self.tree_bound(&self.ensemble.trees()[h], domain, None);
        }
        domain.set(feature, saved);
        self.total(&child)
    }

    fn run(&mut self, root: FeatureBox) {
        if root.representative().is_none() {
            return;
        }
        let mut stack = vec![root];
        let mut splits = Vec::new();
        while let Some(mut domain) = stack.pop() {
            self.nodes += 1;
            splits.clear();
            let bounds: Vec<TreeBound> = self
                .ensemble
                .trees()
                .iter()
                .map(|t| self.tree_bound(t, &domain, Some(&mut splits)))
                .collect();
            let bound = self.total(&bounds);
            if self.hopeless(bound) {
                continue;
            }
            if bounds.iter().all(|b| b.reachable == 1) {
                if let Some(witness) = domain.representative() {
                    debug_assert_eq!(self.ensemble.margin(&witness.values), bound);
                    self.best = Some(Extremum {
                        value: bound,
                        witness,
                    });
                    if self.done() {
                        return;
                    }
                }
                continue;
            }

            // Candidate cut per feature: the median of its active thresholds.
            splits.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            splits.dedup();
            let mut choice: Option<(f64, usize, f64, f64, f64)> = None;
            let mut start = 0;
            while start < splits.len() {
                let feature = splits[start].0;
                let end = start
                    + splits[start..]
                        .iter()
                        .take_while(|s| s.0 == feature)
                        .count();
                let threshold = splits[start + (end - start - 1) / 2].1;
                start = end;
                let iv = *domain.get(feature);
                let below =
                    self.child_bound(&mut domain, &bounds, feature, iv.restrict_below(threshold));
                let above = self.child_bound(
                    &mut domain,
                    &bounds,
                    feature,
                    iv.restrict_at_or_above(threshold),
                );
                let worst = if self.sense.better(below, above) {
                    below
                } else {
                    above
                };
                if choice.is_none_or(|c| self.sense.better(c.0, worst)) {
                    choice = Some((worst, feature, threshold, below, above));
                }
            }
            let (_, feature, threshold, below_bound, above_bound) =
                choice.expect("an unsettled tree has a split with both sides reachable");
            let iv = *domain.get(feature);
            let mut below = domain.clone();
            below.set(feature, iv.restrict_below(threshold));
            domain.set(feature, iv.restrict_at_or_above(threshold));
            // The more promising child is popped first.
            if self.sense.better(below_bound, above_bound) {
                stack.push(domain);
                stack.push(below);
            } else {
                stack.push(below);
                stack.push(domain);
            }
        }
    }
}

fn check_dims(ensemble: &Ensemble, domain: &FeatureBox) -> Result<(), SolverError> {
    if domain.len() != ensemble.num_features() {
        return Err(SolverError::Dimension {
            expected: ensemble.num_features(),
            got: domain.len(),
        });
    }
    Ok(())
}

fn optimum(
    ensemble: &Ensemble,
    domain: &FeatureBox,
    sense: Sense,
) -> Result<Extremum, SolverError> {
    check_dims(ensemble, domain)?;
    let mut search = Search::new(ensemble, sense, Goal::Optimum);
    search.run(domain.clone());
    search.best.ok_or(SolverError::EmptyBox)
}

/// Exact maximum margin over `domain`, with an attaining point.
pub fn max_margin(ensemble: &Ensemble, domain: &FeatureBox) -> Result<Extremum, SolverError> {
    optimum(ensemble, domain, Sense::Max)
}

/// Exact minimum margin over `domain`, with an attaining point.
pub fn min_margin(ensemble: &Ensemble, domain: &FeatureBox) -> Result<Extremum, SolverError> {
    optimum(ensemble, domain, Sense::Min)
}

pub fn margin_bounds(ensemble: &Ensemble, domain: &FeatureBox) -> Result<MarginBound, SolverError> {
    let lo = min_margin(ensemble, domain)?;
    let hi = max_margin(ensemble, domain)?;
    Ok(MarginBound {
        lower: lo.value,
        upper: hi.value,
        attained_lower: lo.witness,
        attained_upper: hi.witness,
    })
}

/// Answer to the counterexample query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlipOutcome {
    pub reachable: bool,
    /// A point agreeing with the fixed features that gets the other class.
    pub witness: Option<Instance>,
    /// Boxes visited by the search.
    pub nodes: u64,
}

/// Decides whether some instance agreeing with `instance` on `fixed` is
/// classified differently. A class-1 instance flips iff the minimum margin
/// is `<= 0`; a class-0 instance flips iff the maximum margin is `> 0`.
pub fn flip_reachable(ensemble: &Ensemble, instance: &Instance, fixed: &[usize]) -> FlipOutcome {
    let class = ensemble.predict_class(&instance.values);
    let sense = if class == 1 { Sense::Min } else { Sense::Max };
    let mut search = Search::new(ensemble, sense, Goal::Cross);
    search.run(box_from_instance(instance, fixed));
    let witness = search.best.map(|b| b.witness);
    debug_assert!(witness
        .as_ref()
        .is_none_or(|w| class_of(ensemble.margin(&w.values)) != class));
    FlipOutcome {
        reachable: witness.is_some(),
        witness,
        nodes: search.nodes,
    }
}
