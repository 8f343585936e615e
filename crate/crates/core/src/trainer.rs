//! Reference gradient-boosted trees trainer for the binary logistic
//! objective: exact greedy splits, second-order leaf weights, no sampling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::gbm::{Ensemble, Tree, TreeNode};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("cannot train on an empty dataset")]
    Empty,
    #[error("training labels contain a single class ({0})")]
    SingleClass(u8),
    #[error("invalid parameter: {0}")]
    Param(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub num_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    pub lambda: f64,
    pub base_score: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            num_trees: 100,
            max_depth: 6,
            learning_rate: 0.3,
            min_child_weight: 1.0,
            lambda: 1.0,
            base_score: 0.5,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |what: &str| Err(TrainError::Param(what.to_string()));
        if self.num_trees == 0 {
            return bad("num_trees must be positive");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return bad("min_child_weight must be >= 0");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be >= 0");
        }
        if !(self.base_score > 0.0 && self.base_score < 1.0) {
            return bad("base_score must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Gradient and Hessian of the logistic loss at `margin`.
pub fn logistic_grad_hess(margin: f64, label: u8) -> (f64, f64) {
    let p = sigmoid(margin);
    (p - f64::from(label), p * (1.0 - p))
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Mean logistic loss of `margins` against `labels`.
pub fn logistic_loss(margins: &[f64], labels: &[u8]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(labels)
        .map(|(&m, &y)| {
            // log(1 + exp(-s)) with s = +m for positives, -m for negatives
            let s = if y == 1 { m } else { -m };
            if s > 0.0 {
                (-s).exp().ln_1p()
            } else {
                -s + s.exp().ln_1p()
            }
        })
        .sum();
    total / margins.len() as f64
}

struct Grower<'a> {
    data: &'a Dataset,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a TrainParams,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.lambda)
    }

    fn leaf(&self, rows: &[usize]) -> TreeNode {
        let (g, h) = self.sums(rows);
        let w = if h + self.params.lambda > 0.0 {
            -g / (h + self.params.lambda)
        } else {
            0.0
        };
        TreeNode::Leaf(w * self.params.learning_rate)
    }

    fn sums(&self, rows: &[usize]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(g, h), &i| {
            (g + self.grad[i], h + self.hess[i])
        })
    }

    fn best_split(&self, rows: &[usize]) -> Option<Split> {
        let (g_total, h_total) = self.sums(rows);
        let parent = self.score(g_total, h_total);
        let mcw = self.params.min_child_weight;
        let mut best: Option<Split> = None;
        let mut sorted = rows.to_vec();
        for feature in 0..self.data.schema.len() {
            let value = |i: usize| self.data.rows[i].values[feature];
            sorted.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
            let (mut g_left, mut h_left) = (0.0, 0.0);
            for w in 0..sorted.len().saturating_sub(1) {
                let i = sorted[w];
                g_left += self.grad[i];
                h_left += self.hess[i];
                let (lo, hi) = (value(i), value(sorted[w + 1]));
                if lo == hi {
                    continue;
                }
                let (g_right, h_right) = (g_total - g_left, h_total - h_left);
                if h_left < mcw || h_right < mcw {
                    continue;
                }
                let gain =
                    0.5 * (self.score(g_left, h_left) + self.score(g_right, h_right) - parent);
                if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if !(lo < threshold && threshold <= hi) {
                        threshold = hi;
                    }
                    best = Some(Split {
                        feature,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn grow(&self, rows: &[usize], depth: usize) -> TreeNode {
        let (_, h) = self.sums(rows);
        if depth >= self.params.max_depth || h < self.params.min_child_weight {
            return self.leaf(rows);
        }
        match self.best_split(rows) {
            None => self.leaf(rows),
            Some(split) => {
                let (below, above): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&i| self.data.rows[i].values[split.feature] < split.threshold);
                TreeNode::split(
                    split.feature,
                    split.threshold,
                    self.grow(&below, depth + 1),
                    self.grow(&above, depth + 1),
                )
            }
        }
    }
}

/// Trains `params.num_trees` trees on `dataset`. The result is fully
/// determined by the dataset and parameters.
pub fn fit(dataset: &Dataset, params: &TrainParams) -> Result<Ensemble, TrainError> {
    params.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::Empty);
    }
    match dataset.class_counts() {
        [0, _] => return Err(TrainError::SingleClass(1)),
        [_, 0] => return Err(TrainError::SingleClass(0)),
        _ => {}
    }
    let init = logit(params.base_score);
    let n = dataset.len();
    let mut margins = vec![init; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let all: Vec<usize> = (0..n).collect();
    let mut trees = Vec::with_capacity(params.num_trees);
    for _ in 0..params.num_trees {
        for i in 0..n {
            (grad[i], hess[i]) = logistic_grad_hess(margins[i], dataset.labels[i]);
        }
        let grower = Grower {
            data: dataset,
            grad: &grad,
            hess: &hess,
            params,
        };
        let tree = Tree::new(grower.grow(&all, 0));
        for (m, row) in margins.iter_mut().zip(&dataset.rows) {
            *m += tree.eval(&row.values);
        }
        trees.push(tree);
    }
    Ensemble::new(dataset.schema.names(), trees, init).map_err(|e| TrainError::Param(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Feature, FeatureSchema, Instance};

    fn step_data() -> Dataset {
        let schema = FeatureSchema::new(vec![Feature::continuous("x")]).unwrap();
        let rows: Vec<Instance> = (0..200)
            .map(|i| Instance::new(vec![i as f64 * 0.05]))
            .collect();
        let labels = rows.iter().map(|r| u8::from(r.values[0] > 5.0)).collect();
        Dataset::new(schema, rows, labels).unwrap()
    }

    #[test]
    fn grad_hess_values() {
        assert_eq!(logistic_grad_hess(0.0, 1), (-0.5, 0.25));
        assert_eq!(logistic_grad_hess(0.0, 0), (0.5, 0.25));
        let (g, h) = logistic_grad_hess(f64::INFINITY, 1);
        assert_eq!((g, h), (0.0, 0.0));
        let (g, h) = logistic_grad_hess(40.0, 1);
        assert!(g.abs() < 1e-15 && h.abs() < 1e-15);
    }

    #[test]
    fn fits_separable_step() {
        let ds = step_data();
        let params = TrainParams {
            num_trees: 10,
            max_depth: 2,
            ..TrainParams::default()
        };
        let model = fit(&ds, &params).unwrap();
        assert_eq!(model.trees().len(), 10);
        assert!(model.trees().iter().all(|t| t.depth() <= 2));
        let correct = ds
            .rows
            .iter()
            .zip(&ds.labels)
            .filter(|(r, &y)| model.predict_class(&r.values) == y)
            .count();
        assert!(
            correct as f64 / ds.len() as f64 >= 0.99,
            "accuracy {correct}/200"
        );
    }

    #[test]
    fn base_score_half_gives_zero_init() {
        let model = fit(
            &step_data(),
            &TrainParams {
                num_trees: 1,
                ..TrainParams::default()
            },
        )
        .unwrap();
        assert_eq!(model.init(), 0.0);
    }

    #[test]
    fn degenerate_inputs() {
        let schema = FeatureSchema::new(vec![Feature::continuous("x")]).unwrap();
        let zeros = Dataset::new(
            schema.clone(),
            vec![Instance::new(vec![1.0]); 3],
            vec![0; 3],
        )
        .unwrap();
        assert!(matches!(
            fit(&zeros, &TrainParams::default()),
            Err(TrainError::SingleClass(0))
        ));
        let empty = Dataset::new(schema, vec![], vec![]).unwrap();
        assert!(matches!(
            fit(&empty, &TrainParams::default()),
            Err(TrainError::Empty)
        ));
        let bad = TrainParams {
            learning_rate: 0.0,
            ..TrainParams::default()
        };
        assert!(matches!(fit(&step_data(), &bad), Err(TrainError::Param(_))));
    }

    #[test]
    fn more_trees_never_raise_training_loss() {
        let ds = step_data();
        let params = TrainParams {
            num_trees: 30,
            max_depth: 3,
            ..TrainParams::default()
        };
        let model = fit(&ds, &params).unwrap();
        let mut margins = vec![model.init(); ds.len()];
        let mut last = logistic_loss(&margins, &ds.labels);
        for tree in model.trees() {
            for (m, r) in margins.iter_mut().zip(&ds.rows) {
                *m += tree.eval(&r.values);
            }
            let loss = logistic_loss(&margins, &ds.labels);
            assert!(loss <= last, "{loss} > {last}");
            last = loss;
        }
    }

    #[test]
    fn unused_features_have_no_splits() {
        let schema = FeatureSchema::new(vec![
            Feature::continuous("x"),
            Feature::continuous("constant"),
        ])
        .unwrap();
        let ds = step_data();
        let rows = ds
            .rows
            .iter()
            .map(|r| Instance::new(vec![r.values[0], 7.0]))
            .collect();
        let ds = Dataset::new(schema, rows, ds.labels).unwrap();
        let model = fit(&ds, &TrainParams::default()).unwrap();
        assert_eq!(model.split_counts()[1], 0);
        assert_eq!(fit(&ds, &TrainParams::default()).unwrap(), model);
    }
}
