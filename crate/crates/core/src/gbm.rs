//! Binary gradient-boosted tree ensembles.
//!
//! An [`Ensemble`] is an ordered list of regression trees plus a constant
//! `init` offset. Its margin on an instance is `init` plus the leaf value
//! reached in every tree, summed in tree order; the predicted class is 1 iff
//! the margin is strictly positive.
//!
//! Internal nodes send an instance to `below` iff `value < threshold`.

use std::collections::HashMap;
use std::fmt;

use serde_json::{json, Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed model dump: {0}")]
    Syntax(String),
    #[error("malformed model at {path}: {reason}")]
    Structure { path: String, reason: String },
    #[error("unknown feature `{name}` at {path}")]
    UnknownFeature { path: String, name: String },
    #[error("dangling child reference `{child}` from node `{node}`")]
    DanglingChild { node: String, child: String },
    #[error("non-finite value at {0}")]
    NonFinite(String),
    #[error("invalid ensemble: {0}")]
    Invalid(String),
}

/// Recursive form of a regression tree, used to build trees by hand.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        below: Box<TreeNode>,
        at_or_above: Box<TreeNode>,
    },
    Leaf(f64),
}

impl TreeNode {
    pub fn split(feature: usize, threshold: f64, below: TreeNode, at_or_above: TreeNode) -> Self {
        TreeNode::Internal {
            feature,
            threshold,
            below: Box::new(below),
            at_or_above: Box::new(at_or_above),
        }
    }

    pub fn leaf(value: f64) -> Self {
        TreeNode::Leaf(value)
    }
}

/// Flattened tree node; children are indices into [`Tree::nodes`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        below: usize,
        at_or_above: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cmp {
    /// `value < threshold`
    Lt,
    /// `value >= threshold`
    Ge,
}

/// One threshold test along a root-to-leaf path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Literal {
    pub feature: usize,
    pub cmp: Cmp,
    pub threshold: f64,
}

impl Literal {
    pub fn holds(&self, value: f64) -> bool {
        match self.cmp {
            Cmp::Lt => value < self.threshold,
            Cmp::Ge => value >= self.threshold,
        }
    }
}

/// A root-to-leaf path as an implication `antecedent -> o = leaf`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathImplication {
    pub antecedent: Vec<Literal>,
    pub leaf: f64,
}

/// A regression tree stored as a node arena with the root at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn new(root: TreeNode) -> Self {
        fn push(node: TreeNode, nodes: &mut Vec<Node>) -> usize {
            let id = nodes.len();
            match node {
                TreeNode::Leaf(value) => nodes.push(Node::Leaf { value }),
                TreeNode::Internal {
                    feature,
                    threshold,
                    below,
                    at_or_above,
                } => {
                    nodes.push(Node::Leaf { value: 0.0 });
                    let below = push(*below, nodes);
                    let at_or_above = push(*at_or_above, nodes);
                    nodes[id] = Node::Split {
                        feature,
                        threshold,
                        below,
                        at_or_above,
                    };
                }
            }
            id
        }
        let mut nodes = Vec::new();
        push(root, &mut nodes);
        Tree { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn to_node(&self) -> TreeNode {
        fn build(nodes: &[Node], id: usize) -> TreeNode {
            match nodes[id] {
                Node::Leaf { value } => TreeNode::Leaf(value),
                Node::Split {
                    feature,
                    threshold,
                    below,
                    at_or_above,
                } => TreeNode::split(
                    feature,
                    threshold,
                    build(nodes, below),
                    build(nodes, at_or_above),
                ),
            }
        }
        build(&self.nodes, 0)
    }

    /// Leaf value reached by `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    below,
                    at_or_above,
                } => {
                    id = if x[feature] < threshold {
                        below
                    } else {
                        at_or_above
                    }
                }
            }
        }
    }

    pub fn internal_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.len() - self.internal_count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split {
                    below, at_or_above, ..
                } => 1 + go(nodes, below).max(go(nodes, at_or_above)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Every root-to-leaf path, below-branch first.
    pub fn paths(&self) -> Vec<PathImplication> {
        fn go(
            nodes: &[Node],
            id: usize,
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
                    for (cmp, child) in [(Cmp::Lt, below), (Cmp::Ge, at_or_above)] {
                        prefix.push(Literal {
                            feature,
                            cmp,
                            threshold,
                        });
                        go(nodes, child, prefix, out);
                        prefix.pop();
                    }
                }
            }
        }
        let mut out = Vec::new();
        go(&self.nodes, 0, &mut Vec::new(), &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    features: Vec<String>,
    trees: Vec<Tree>,
    init: f64,
}

impl Ensemble {
    pub fn new(features: Vec<String>, trees: Vec<Tree>, init: f64) -> Result<Self, ModelError> {
        if !init.is_finite() {
            return Err(ModelError::NonFinite("init".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &features {
            if !seen.insert(name) {
                return Err(ModelError::Invalid(format!("duplicate feature `{name}`")));
            }
        }
        for (h, tree) in trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return Err(ModelError::Invalid(format!("tree {h} is empty")));
            }
            for (id, node) in tree.nodes.iter().enumerate() {
                let path = format!("trees[{h}] node {id}");
                match *node {
                    Node::Leaf { value } if !value.is_finite() => {
                        return Err(ModelError::NonFinite(path))
                    }
                    Node::Split {
                        feature,
                        threshold,
                        below,
                        at_or_above,
                    } => {
                        if feature >= features.len() {
                            return Err(ModelError::UnknownFeature {
                                path,
                                name: format!("#{feature}"),
                            });
                        }
                        if !threshold.is_finite() {
                            return Err(ModelError::NonFinite(path));
                        }
                        if below <= id
                            || at_or_above <= id
                            || below >= tree.nodes.len()
                            || at_or_above >= tree.nodes.len()
                        {
                            return Err(ModelError::Invalid(format!(
                                "{path} has invalid children"
                            )));
                        }
                    }
                    _ => {}
                }
            }
        }
        Ok(Ensemble {
            features,
            trees,
            init,
        })
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn init(&self) -> f64 {
        self.init
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f == name)
    }

    /// `init` plus every tree's leaf value, summed in tree order.
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.trees.iter().fold(self.init, |acc, t| acc + t.eval(x))
    }

    pub fn predict_class(&self, x: &[f64]) -> u8 {
        class_of(self.margin(x))
    }

    /// Number of internal nodes testing each feature, across all trees.
    pub fn split_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.features.len()];
        for tree in &self.trees {
            for node in &tree.nodes {
                if let Node::Split { feature, .. } = node {
                    counts[*feature] += 1;
                }
            }
        }
        counts
    }

    pub fn split_count_importance(&self) -> HashMap<String, usize> {
        self.features
            .iter()
            .cloned()
            .zip(self.split_counts())
            .collect()
    }

    /// Split counts normalized to sum to 1 (all zero for a split-free model).
    pub fn normalized_importance(&self) -> Vec<f64> {
        let counts = self.split_counts();
        let total: usize = counts.iter().sum();
        counts
            .iter()
            .map(|&c| {
                if total == 0 {
                    0.0
                } else {
                    c as f64 / total as f64
                }
            })
            .collect()
    }

    /// Sorted, deduplicated thresholds per feature.
    pub fn thresholds(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.features.len()];
        for tree in &self.trees {
            for node in &tree.nodes {
                if let Node::Split {
                    feature, threshold, ..
                } = *node
                {
                    out[feature].push(threshold);
                }
            }
        }
        for ts in &mut out {
            ts.sort_by(f64::total_cmp);
            ts.dedup();
        }
        out
    }

    pub fn internal_count(&self) -> usize {
        self.trees.iter().map(Tree::internal_count).sum()
    }

    pub fn to_json_value(&self) -> Value {
        fn node(e: &Ensemble, n: TreeNode) -> Value {
            match n {
                TreeNode::Leaf(v) => json!({ "leaf": v }),
                TreeNode::Internal {
                    feature,
                    threshold,
                    below,
                    at_or_above,
                } => json!({
                    "feat": e.features[feature],
                    "thr": threshold,
                    "below": node(e, *below),
                    "at_or_above": node(e, *at_or_above),
                }),
            }
        }
        json!({
            "init": self.init,
            "features": self.features,
            "trees": self.trees.iter().map(|t| node(self, t.to_node())).collect::<Vec<_>>(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("ensemble serializes")
    }
}

pub fn class_of(margin: f64) -> u8 {
    u8::from(margin > 0.0)
}

/// Parses the JSON dump format
/// `{"init": r, "features": [..], "trees": [node, ..]}` where a node is
/// `{"feat", "thr", "below", "at_or_above"}` or `{"leaf"}`. An optional
/// `meta` object is ignored.
pub fn load_ensemble(dump: &str) -> Result<Ensemble, ModelError> {
    let doc: Value = serde_json::from_str(dump).map_err(|e| ModelError::Syntax(e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| ModelError::Syntax("top level must be an object".into()))?;
    check_keys(obj, &["init", "features", "trees", "meta"], "$")?;
    let init = number(obj.get("init"), "$.init")?;
    let features: Vec<String> = match obj.get("features") {
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| ModelError::Structure {
                        path: format!("$.features[{i}]"),
                        reason: "expected a string".into(),
                    })
            })
            .collect::<Result<_, _>>()?,
        _ => return Err(structure("$.features", "expected an array of names")),
    };
    let trees = match obj.get("trees") {
        Some(Value::Array(items)) => items,
        _ => return Err(structure("$.trees", "expected an array")),
    };
    let index: HashMap<&str, usize> = features
        .iter()
        .enumerate()
        .map(|(i, f)| (f.as_str(), i))
        .collect();
    let trees = trees
        .iter()
        .enumerate()
        .map(|(h, t)| parse_node(t, &index, &format!("$.trees[{h}]")).map(Tree::new))
        .collect::<Result<Vec<_>, _>>()?;
    Ensemble::new(features, trees, init)
}

fn structure(path: &str, reason: &str) -> ModelError {
    ModelError::Structure {
        path: path.to_string(),
        reason: reason.to_string(),
    }
}

fn check_keys(obj: &Map<String, Value>, allowed: &[&str], path: &str) -> Result<(), ModelError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(structure(path, &format!("unexpected field `{k}`"))),
        None => Ok(()),
    }
}

fn number(v: Option<&Value>, path: &str) -> Result<f64, ModelError> {
    let x = v
        .and_then(Value::as_f64)
        .ok_or_else(|| structure(path, "expected a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ModelError::NonFinite(path.to_string()))
    }
}

fn parse_node(v: &Value, index: &HashMap<&str, usize>, path: &str) -> Result<TreeNode, ModelError> {
    let obj = v
        .as_object()
        .ok_or_else(|| structure(path, "expected a node object"))?;
    if obj.contains_key("leaf") {
        check_keys(obj, &["leaf"], path)?;
        return Ok(TreeNode::Leaf(number(
            obj.get("leaf"),
            &format!("{path}.leaf"),
        )?));
    }
    check_keys(obj, &["feat", "thr", "below", "at_or_above"], path)?;
    let name = obj
        .get("feat")
        .and_then(Value::as_str)
        .ok_or_else(|| structure(path, "node needs `leaf` or `feat`"))?;
    let feature = *index.get(name).ok_or_else(|| ModelError::UnknownFeature {
        path: path.to_string(),
        name: name.to_string(),
    })?;
    let threshold = number(obj.get("thr"), &format!("{path}.thr"))?;
    let child = |key: &str| {
        let p = format!("{path}.{key}");
        obj.get(key)
            .ok_or_else(|| structure(&p, "missing child"))
            .and_then(|c| parse_node(c, index, &p))
    };
    Ok(TreeNode::split(
        feature,
        threshold,
        child("below")?,
        child("at_or_above")?,
    ))
}

/// Loads the node-table layout written by mainstream boosting libraries
/// (`Tree, Node, ID, Feature, Split, Yes, No, ..., Gain, ...`). Rows whose
/// `Feature` is `Leaf` carry the leaf value in `Gain`; `Yes` is the branch
/// taken when `value < Split`.
pub fn load_node_table(
    table: &str,
    features: Vec<String>,
    init: f64,
) -> Result<Ensemble, ModelError> {
    let mut rdr = csv::Reader::from_reader(table.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| ModelError::Syntax(e.to_string()))?
        .clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| ModelError::Syntax(format!("node table lacks column `{name}`")))
    };
    let (c_tree, c_id, c_feat, c_split, c_yes, c_no, c_gain) = (
        col("Tree")?,
        col("ID")?,
        col("Feature")?,
        col("Split")?,
        col("Yes")?,
        col("No")?,
        col("Gain")?,
    );

    struct Row {
        feature: String,
        split: String,
        yes: String,
        no: String,
        gain: String,
    }
    let mut tree_order: Vec<String> = Vec::new();
    let mut roots: HashMap<String, String> = HashMap::new();
    let mut rows: HashMap<String, Row> = HashMap::new();
    for record in rdr.records() {
        let r = record.map_err(|e| ModelError::Syntax(e.to_string()))?;
        let get = |c: usize| r.get(c).unwrap_or("").trim().to_string();
        let (tree, id) = (get(c_tree), get(c_id));
        if !roots.contains_key(&tree) {
            tree_order.push(tree.clone());
            roots.insert(tree.clone(), id.clone());
        }
        let row = Row {
            feature: get(c_feat),
            split: get(c_split),
            yes: get(c_yes),
            no: get(c_no),
            gain: get(c_gain),
        };
        if rows.insert(id.clone(), row).is_some() {
            return Err(ModelError::Syntax(format!("duplicate node id `{id}`")));
        }
    }
    let index: HashMap<&str, usize> = features
        .iter()
        .enumerate()
        .map(|(i, f)| (f.as_str(), i))
        .collect();

    fn build(
        id: &str,
        rows: &HashMap<String, Row>,
        index: &HashMap<&str, usize>,
        visited: &mut std::collections::HashSet<String>,
    ) -> Result<TreeNode, ModelError> {
        if !visited.insert(id.to_string()) {
            return Err(ModelError::Invalid(format!(
                "node `{id}` is reachable twice"
            )));
        }
        let row = &rows[id];
        let parse = |text: &str, what: &str| -> Result<f64, ModelError> {
            let v: f64 = text
                .parse()
                .map_err(|_| ModelError::Syntax(format!("node `{id}`: bad {what} `{text}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(ModelError::NonFinite(format!("node `{id}`")))
            }
        };
        if row.feature == "Leaf" {
            return Ok(TreeNode::Leaf(parse(&row.gain, "leaf value")?));
        }
        let feature =
            *index
                .get(row.feature.as_str())
                .ok_or_else(|| ModelError::UnknownFeature {
                    path: format!("node `{id}`"),
                    name: row.feature.clone(),
                })?;
        let threshold = parse(&row.split, "split")?;
        let mut child = |c: &str| {
            if rows.contains_key(c) {
                build(c, rows, index, visited)
            } else {
                Err(ModelError::DanglingChild {
                    node: id.to_string(),
                    child: c.to_string(),
                })
            }
        };
        let below = child(&row.yes)?;
        let at_or_above = child(&row.no)?;
        Ok(TreeNode::split(feature, threshold, below, at_or_above))
    }

    let mut trees = Vec::new();
    for t in &tree_order {
        let mut visited = std::collections::HashSet::new();
        trees.push(Tree::new(build(&roots[t], &rows, &index, &mut visited)?));
    }
    Ensemble::new(features, trees, init)
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.cmp {
            Cmp::Lt => "<",
            Cmp::Ge => ">=",
        };
        write!(f, "x{} {op} {}", self.feature, self.threshold)
    }
}
