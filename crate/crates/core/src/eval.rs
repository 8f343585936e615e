//! Fidelity of explanations measured on synthetic samples, per-class
//! aggregates and the feature-frequency table.
//!
//! Samples keep the pinned features of an explanation and redraw every other
//! feature: continuous features uniformly over their observed range, binary
//! features uniformly over {0, 1}, one-hot groups by drawing one level
//! uniformly among those consistent with the pinned members.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{FeatureKind, FeatureSchema, Instance};
use crate::explain::Explanation;
use crate::gbm::Ensemble;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("number of synthetic samples must be positive")]
    NoSamples,
    #[error("feature `{0}` has no observed range to sample from")]
    MissingRange(String),
    #[error("pinned value of `{feature}` is {pinned}, instance has {actual}")]
    PinMismatch {
        feature: String,
        pinned: f64,
        actual: f64,
    },
    #[error("pins leave no admissible level for one-hot group `{0}`")]
    NoLevel(String),
    #[error("instance has {got} values, schema has {expected} features")]
    Dimension { expected: usize, got: usize },
}

/// Draws `n` instances agreeing with `instance` on `retained`.
pub fn gen_synthetic(
    instance: &Instance,
    retained: &[(usize, f64)],
    schema: &FeatureSchema,
    n: usize,
    seed: u64,
) -> Result<Vec<Instance>, EvalError> {
    if n == 0 {
        return Err(EvalError::NoSamples);
    }
    if instance.len() != schema.len() {
        return Err(EvalError::Dimension {
            expected: schema.len(),
            got: instance.len(),
        });
    }
    let features = schema.features();
    let mut pinned = vec![false; schema.len()];
    for &(f, v) in retained {
        if instance.values[f] != v {
            return Err(EvalError::PinMismatch {
                feature: features[f].name.clone(),
                pinned: v,
                actual: instance.values[f],
            });
        }
        pinned[f] = true;
    }

    // Admissible levels of each one-hot group, given the pins.
    let mut groups = Vec::new();
    for (name, members) in schema.one_hot_groups() {
        let levels = features[members[0]].one_hot().expect("group member").levels;
        let mut allowed: Vec<usize> = (0..levels).collect();
        for &m in members.iter().filter(|&&m| pinned[m]) {
            let index = features[m].one_hot().expect("group member").index;
            if instance.values[m] == 1.0 {
                allowed.retain(|&l| l == index);
            } else {
                allowed.retain(|&l| l != index);
            }
        }
        if allowed.is_empty() {
            return Err(EvalError::NoLevel(name));
        }
        groups.push((members, allowed));
    }
    let mut ranges = vec![[0.0, 0.0]; schema.len()];
    for (f, feature) in features.iter().enumerate() {
        if !pinned[f] {
            ranges[f] = feature
                .range()
                .ok_or_else(|| EvalError::MissingRange(feature.name.clone()))?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut values = instance.values.clone();
        for (f, feature) in features.iter().enumerate() {
            if pinned[f] {
                continue;
            }
            let [lo, hi] = ranges[f];
            values[f] = match &feature.kind {
                FeatureKind::Continuous { .. } if lo == hi => lo,
                FeatureKind::Continuous { .. } => rng.gen_range(lo..=hi),
                FeatureKind::Binary { one_hot: Some(_) } => continue,
                FeatureKind::Binary { one_hot: None } => f64::from(rng.gen_range(0..2u8)),
                FeatureKind::Categorical { levels } => rng.gen_range(0..levels.len()) as f64,
            };
        }
        for (members, allowed) in &groups {
            let level = allowed[rng.gen_range(0..allowed.len())];
            for &m in members {
                let index = features[m].one_hot().expect("group member").index;
                values[m] = if index == level { 1.0 } else { 0.0 };
            }
        }
        out.push(Instance::new(values));
    }
    Ok(out)
}

/// Percentage of `samples` classified like `instance`.
pub fn fidelity(
    ensemble: &Ensemble,
    instance: &Instance,
    samples: &[Instance],
) -> Result<f64, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::NoSamples);
    }
    let class = ensemble.predict_class(&instance.values);
    let agree = samples
        .iter()
        .filter(|s| ensemble.predict_class(&s.values) == class)
        .count();
    Ok(100.0 * agree as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityResult {
    pub index: usize,
    pub predicted_class: u8,
    pub explanation_size: usize,
    pub fidelity_pct: f64,
    pub gen_time: Option<f64>,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Stat {
            mean,
            std: var.sqrt(),
        })
    }

    fn show(stat: Option<Stat>, decimals: usize) -> String {
        match stat {
            Some(s) => format!("{:.*} ± {:.*}", decimals, s.mean, decimals, s.std),
            None => "-".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: u8,
    pub samples: usize,
    pub synthetic: usize,
    pub size: Option<Stat>,
    pub size_min: Option<usize>,
    pub size_max: Option<usize>,
    pub fidelity: Option<Stat>,
    #[serde(skip)]
    pub time: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub rank: usize,
    pub feature: String,
    pub count: usize,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub version: String,
    pub seed: u64,
    pub n_synthetic: usize,
    pub sampling: String,
    pub std: String,
    pub importance: String,
}

impl ReportMetadata {
    pub fn new(seed: u64, n_synthetic: usize) -> Self {
        ReportMetadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            n_synthetic,
            sampling: "uniform over observed ranges; uniform levels".into(),
            std: "population".into(),
            importance: "normalized split count".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metadata: ReportMetadata,
    pub classes: Vec<ClassSummary>,
    pub feature_frequency: Vec<FrequencyRow>,
    /// Rows whose fidelity is below 100%.
    pub flagged_rows: Vec<usize>,
}

/// Builds per-class statistics and the frequency table. `names` and
/// `importance` are indexed by feature id.
pub fn aggregate(
    results: &[FidelityResult],
    explanations: &[Explanation],
    names: &[String],
    importance: &[f64],
    metadata: ReportMetadata,
) -> EvaluationReport {
    assert_eq!(
        results.len(),
        explanations.len(),
        "results and explanations must align"
    );
    let classes = [0u8, 1]
        .iter()
        .map(|&class| {
            let rows: Vec<&FidelityResult> = results
                .iter()
                .filter(|r| r.predicted_class == class)
                .collect();
            let sizes: Vec<f64> = rows.iter().map(|r| r.explanation_size as f64).collect();
            let fids: Vec<f64> = rows.iter().map(|r| r.fidelity_pct).collect();
            let times: Vec<f64> = rows.iter().filter_map(|r| r.gen_time).collect();
            ClassSummary {
                class,
                samples: rows.len(),
                synthetic: metadata.n_synthetic,
                size: Stat::of(&sizes),
                size_min: rows.iter().map(|r| r.explanation_size).min(),
                size_max: rows.iter().map(|r| r.explanation_size).max(),
                fidelity: Stat::of(&fids),
                time: if times.len() == rows.len() {
                    Stat::of(&times)
                } else {
                    None
                },
            }
        })
        .collect();

    let mut counts = vec![0usize; names.len()];
    for e in explanations {
        for (f, _) in &e.retained {
            counts[*f] += 1;
        }
    }
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| {
        counts[b]
            .cmp(&counts[a])
            .then(importance[b].total_cmp(&importance[a]))
    });
    let feature_frequency = order
        .iter()
        .enumerate()
        .map(|(rank, &f)| FrequencyRow {
            rank: rank + 1,
            feature: names[f].clone(),
            count: counts[f],
            importance: importance[f],
        })
        .collect();
    let flagged_rows = results
        .iter()
        .filter(|r| r.fidelity_pct < 100.0)
        .map(|r| r.index)
        .collect();
    EvaluationReport {
        metadata,
        classes,
        feature_frequency,
        flagged_rows,
    }
}

impl EvaluationReport {
    /// Deterministic JSON rendering; timings are kept out of it.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-class time statistics, rendered separately from the report body.
    pub fn timing_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .classes
            .iter()
            .map(|c| serde_json::json!({ "class": c.class, "time": c.time }))
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({ "classes": rows }))
            .expect("timing serializes")
    }

    /// Fixed-width table: Method, Class, Samples, Synthetic, Exp. Size,
    /// Fidelity(%), Time(s).
    pub fn render_table(&self) -> String {
        let header = [
            "Method",
            "Class",
            "Samples",
            "Synthetic",
            "Exp. Size",
            "Fidelity(%)",
            "Time(s)",
        ];
        let rows: Vec<[String; 7]> = self
            .classes
            .iter()
            .map(|c| {
                [
                    "Logic-based".to_string(),
                    c.class.to_string(),
                    c.samples.to_string(),
                    c.synthetic.to_string(),
                    Stat::show(c.size, 2),
                    Stat::show(c.fidelity, 2),
                    Stat::show(c.time, 4),
                ]
            })
            .collect();
        fixed_width(&header, &rows)
    }

    /// Fixed-width table: Rank, Feature, Count in Explanations, Feature
    /// Importance.
    pub fn render_frequency_table(&self) -> String {
        let header = [
            "Rank",
            "Feature",
            "Count in Explanations",
            "Feature Importance",
        ];
        let rows: Vec<[String; 4]> = self
            .feature_frequency
            .iter()
            .map(|r| {
                [
                    r.rank.to_string(),
                    r.feature.clone(),
                    r.count.to_string(),
                    format!("{:.4}", r.importance),
                ]
            })
            .collect();
        fixed_width(&header, &rows)
    }
}

fn fixed_width<const N: usize>(header: &[&str; N], rows: &[[String; N]]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("| {} |", padded.join(" | "))
    };
    let rule = format!(
        "+{}+",
        widths
            .iter()
            .map(|&w| "-".repeat(w + 2))
            .collect::<Vec<_>>()
            .join("+")
    );
    let mut out = String::new();
    let _ = writeln!(out, "{rule}");
    let _ = writeln!(out, "{}", line(header.to_vec()));
    let _ = writeln!(out, "{rule}");
    for row in rows {
        let _ = writeln!(out, "{}", line(row.iter().map(String::as_str).collect()));
    }
    let _ = writeln!(out, "{rule}");
    out
}
