//! Typed tabular datasets: schema sidecar, CSV ingestion, one-hot encoding
//! and importance-based feature selection.
//!
//! Rows are stored as [`Instance`]s of `f64`. Categorical features hold the
//! index of their level until [`one_hot_encode`] replaces them with one
//! binary indicator per level.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: {reason}")]
    Cell {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("invalid feature selection: {0}")]
    Selection(String),
}

/// Membership of an encoded binary feature in a one-hot group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHotMember {
    pub group: String,
    pub level: String,
    /// Position of `level` within the original categorical feature.
    pub index: usize,
    /// Number of levels of the original categorical feature.
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        range: Option<[f64; 2]>,
    },
    Binary {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        one_hot: Option<OneHotMember>,
    },
    Categorical {
        levels: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl Feature {
    pub fn continuous(name: impl Into<String>) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Continuous { range: None },
        }
    }

    pub fn continuous_in(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Continuous {
                range: Some([lo, hi]),
            },
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Binary { one_hot: None },
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        levels: impl IntoIterator<Item = S>,
    ) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Categorical {
                levels: levels.into_iter().map(Into::into).collect(),
            },
        }
    }

    /// Observed range used for sampling. Binary features always span `[0, 1]`.
    pub fn range(&self) -> Option<[f64; 2]> {
        match &self.kind {
            FeatureKind::Continuous { range } => *range,
            FeatureKind::Binary { .. } => Some([0.0, 1.0]),
            FeatureKind::Categorical { levels } => Some([0.0, (levels.len() - 1) as f64]),
        }
    }

    pub fn one_hot(&self) -> Option<&OneHotMember> {
        match &self.kind {
            FeatureKind::Binary { one_hot } => one_hot.as_ref(),
            _ => None,
        }
    }
}

/// Name of the binary column produced for `level` of categorical `feature`.
pub fn one_hot_name(feature: &str, level: &str) -> String {
    format!("{feature}_{level}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSchema {
    features: Vec<Feature>,
}

#[derive(Deserialize)]
struct SchemaDoc {
    features: Vec<Feature>,
}

impl<'de> Deserialize<'de> for FeatureSchema {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = SchemaDoc::deserialize(deserializer)?;
        FeatureSchema::new(doc.features).map_err(serde::de::Error::custom)
    }
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for f in &features {
            if f.name.is_empty() {
                return Err(DatasetError::Schema("empty feature name".into()));
            }
            match &f.kind {
                FeatureKind::Continuous {
                    range: Some([lo, hi]),
                } => {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return Err(DatasetError::Schema(format!(
                            "feature `{}` has invalid range [{lo}, {hi}]",
                            f.name
                        )));
                    }
                }
                FeatureKind::Categorical { levels } => {
                    if levels.len() < 2 {
                        return Err(DatasetError::Schema(format!(
                            "categorical feature `{}` needs at least 2 levels",
                            f.name
                        )));
                    }
                    let distinct: HashSet<_> = levels.iter().collect();
                    if distinct.len() != levels.len() {
                        return Err(DatasetError::Schema(format!(
                            "categorical feature `{}` has duplicate levels",
                            f.name
                        )));
                    }
                }
                FeatureKind::Binary { one_hot: Some(m) } if m.levels < 2 || m.index >= m.levels => {
                    return Err(DatasetError::Schema(format!(
                        "feature `{}` has inconsistent one-hot metadata",
                        f.name
                    )));
                }
                _ => {}
            }
            // Uniqueness must hold for the expanded (encoded) names too.
            let expanded: Vec<String> = match &f.kind {
                FeatureKind::Categorical { levels } => {
                    levels.iter().map(|l| one_hot_name(&f.name, l)).collect()
                }
                _ => vec![f.name.clone()],
            };
            for name in expanded {
                if !seen.insert(name.clone()) {
                    return Err(DatasetError::Schema(format!(
                        "duplicate feature name `{name}`"
                    )));
                }
            }
        }
        Ok(FeatureSchema { features })
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        serde_json::from_str(text).map_err(|e| DatasetError::Schema(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Checks the per-position invariants of `instance`.
    pub fn check_instance(&self, instance: &Instance) -> Result<(), String> {
        if instance.values.len() != self.features.len() {
            return Err(format!(
                "expected {} values, found {}",
                self.features.len(),
                instance.values.len()
            ));
        }
        for (f, &v) in self.features.iter().zip(&instance.values) {
            if !v.is_finite() {
                return Err(format!("`{}` is not a finite number", f.name));
            }
            match &f.kind {
                FeatureKind::Binary { .. } if v != 0.0 && v != 1.0 => {
                    return Err(format!("binary feature `{}` has value {v}", f.name));
                }
                FeatureKind::Categorical { levels }
                    if v.fract() != 0.0 || v < 0.0 || v as usize >= levels.len() =>
                {
                    return Err(format!(
                        "categorical feature `{}` has level index {v}",
                        f.name
                    ));
                }
                _ => {}
            }
        }
        for (group, members) in self.one_hot_groups() {
            let complete = members.len() == self.features[members[0]].one_hot().unwrap().levels;
            let sum: f64 = members.iter().map(|&i| instance.values[i]).sum();
            if (complete && sum != 1.0) || sum > 1.0 {
                return Err(format!("one-hot group `{group}` sums to {sum}"));
            }
        }
        Ok(())
    }

    /// One-hot groups present in the schema, as (group name, member positions)
    /// in order of first appearance.
    pub fn one_hot_groups(&self) -> Vec<(String, Vec<usize>)> {
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, f) in self.features.iter().enumerate() {
            if let Some(m) = f.one_hot() {
                match groups.iter_mut().find(|(g, _)| *g == m.group) {
                    Some((_, members)) => members.push(i),
                    None => groups.push((m.group.clone(), vec![i])),
                }
            }
        }
        groups
    }

    fn project(&self, indices: &[usize]) -> FeatureSchema {
        FeatureSchema {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
        }
    }
}

/// A feature vector aligned to a schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub values: Vec<f64>,
}

impl Instance {
    pub fn new(values: Vec<f64>) -> Self {
        Instance { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn project(&self, indices: &[usize]) -> Instance {
        Instance::new(indices.iter().map(|&i| self.values[i]).collect())
    }
}

impl From<Vec<f64>> for Instance {
    fn from(values: Vec<f64>) -> Self {
        Instance::new(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub rows: Vec<Instance>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(
        schema: FeatureSchema,
        rows: Vec<Instance>,
        labels: Vec<u8>,
    ) -> Result<Self, DatasetError> {
        if rows.len() != labels.len() {
            return Err(DatasetError::Selection(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        for (i, (row, &label)) in rows.iter().zip(&labels).enumerate() {
            if label > 1 {
                return Err(DatasetError::Row {
                    row: i + 1,
                    reason: format!("label {label} is not 0 or 1"),
                });
            }
            schema
                .check_instance(row)
                .map_err(|reason| DatasetError::Row { row: i + 1, reason })?;
        }
        Ok(Dataset {
            schema,
            rows,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of rows labelled 0 and 1.
    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - ones, ones]
    }

    /// Reorders and restricts the columns to `names`.
    pub fn project(&self, names: &[String]) -> Result<Dataset, DatasetError> {
        let indices = names
            .iter()
            .map(|n| {
                self.schema
                    .index_of(n)
                    .ok_or_else(|| DatasetError::MissingColumn(n.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.project_indices(&indices))
    }

    fn project_indices(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.project(indices),
            rows: self.rows.iter().map(|r| r.project(indices)).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Fills absent continuous ranges with the observed min and max.
    fn fill_ranges(&mut self) {
        if self.rows.is_empty() {
            return;
        }
        for (i, f) in self.schema.features.iter_mut().enumerate() {
            if let FeatureKind::Continuous {
                range: range @ None,
            } = &mut f.kind
            {
                let (lo, hi) = self
                    .rows
                    .iter()
                    .map(|r| r.values[i])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v), hi.max(v))
                    });
                *range = Some([lo, hi]);
            }
        }
    }

    /// Writes the dataset as CSV with the label in the last column.
    pub fn write_csv(&self, path: impl AsRef<Path>, label_col: &str) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.schema.names();
        header.push(label_col.to_string());
        w.write_record(&header)?;
        for (row, label) in self.rows.iter().zip(&self.labels) {
            let mut record: Vec<String> = self
                .schema
                .features
                .iter()
                .zip(&row.values)
                .map(|(f, &v)| match &f.kind {
                    FeatureKind::Categorical { levels } => levels[v as usize].clone(),
                    _ => format!("{v}"),
                })
                .collect();
            record.push(label.to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    label_col: &str,
) -> Result<Dataset, DatasetError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema, label_col)
}

/// Parses CSV text against `schema`. Columns are matched by header name;
/// columns not named in the schema are ignored.
pub fn read_csv<R: Read>(
    reader: R,
    schema: &FeatureSchema,
    label_col: &str,
) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => csv::StringRecord::new(),
    };
    let position = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let columns = schema
        .features
        .iter()
        .map(|f| position(&f.name))
        .collect::<Result<Vec<_>, _>>()?;
    let label_pos = position(label_col)?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in records.enumerate() {
        let record = record?;
        let row = i + 1;
        let cell = |pos: usize, column: &str| -> Result<&str, DatasetError> {
            let text = record.get(pos).map(str::trim).unwrap_or("");
            if text.is_empty() {
                return Err(DatasetError::Cell {
                    row,
                    column: column.to_string(),
                    reason: "missing value".into(),
                });
            }
            Ok(text)
        };
        let mut values = Vec::with_capacity(columns.len());
        for (f, &pos) in schema.features.iter().zip(&columns) {
            let text = cell(pos, &f.name)?;
            let bad = |reason: String| DatasetError::Cell {
                row,
                column: f.name.clone(),
                reason,
            };
            let value = match &f.kind {
                FeatureKind::Continuous { .. } => match text.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => return Err(bad(format!("`{text}` is not a finite number"))),
                },
                FeatureKind::Binary { .. } => match text.parse::<f64>() {
                    Ok(v) if v == 0.0 || v == 1.0 => v,
                    _ => return Err(bad(format!("`{text}` is not a binary value (0 or 1)"))),
                },
                FeatureKind::Categorical { levels } => {
                    match levels.iter().position(|l| l == text) {
                        Some(k) => k as f64,
                        None => return Err(bad(format!("unknown level `{text}`"))),
                    }
                }
            };
            values.push(value);
        }
        let label = match cell(label_pos, label_col)?.parse::<f64>() {
            Ok(0.0) => 0,
            Ok(1.0) => 1,
            _ => {
                return Err(DatasetError::Cell {
                    row,
                    column: label_col.to_string(),
                    reason: "label must be 0 or 1".into(),
                })
            }
        };
        rows.push(Instance::new(values));
        labels.push(label);
    }
    let mut dataset = Dataset::new(schema.clone(), rows, labels)?;
    dataset.fill_ranges();
    Ok(dataset)
}

/// Replaces every categorical feature with one binary feature per level.
pub fn one_hot_encode(dataset: &Dataset) -> Dataset {
    let mut features = Vec::new();
    for f in &dataset.schema.features {
        match &f.kind {
            FeatureKind::Categorical { levels } => {
                for (index, level) in levels.iter().enumerate() {
                    features.push(Feature {
                        name: one_hot_name(&f.name, level),
                        kind: FeatureKind::Binary {
                            one_hot: Some(OneHotMember {
                                group: f.name.clone(),
                                level: level.clone(),
                                index,
                                levels: levels.len(),
                            }),
                        },
                    });
                }
            }
            _ => features.push(f.clone()),
        }
    }
    let rows = dataset
        .rows
        .iter()
        .map(|row| {
            let mut values = Vec::with_capacity(features.len());
            for (f, &v) in dataset.schema.features.iter().zip(&row.values) {
                match &f.kind {
                    FeatureKind::Categorical { levels } => values
                        .extend((0..levels.len()).map(|k| if k == v as usize { 1.0 } else { 0.0 })),
                    _ => values.push(v),
                }
            }
            Instance::new(values)
        })
        .collect();
    Dataset {
        schema: FeatureSchema { features },
        rows,
        labels: dataset.labels.clone(),
    }
}

/// Keeps the `k` most important features. Ties go to the feature listed
/// first in the schema; retained columns keep their schema order.
pub fn select_top_k(
    dataset: &Dataset,
    importance: &HashMap<String, f64>,
    k: usize,
) -> Result<Dataset, DatasetError> {
    let n = dataset.schema.len();
    if k == 0 || k > n {
        return Err(DatasetError::Selection(format!(
            "k = {k} is outside 1..={n}"
        )));
    }
    let scores = dataset
        .schema
        .features
        .iter()
        .map(|f| {
            importance
                .get(&f.name)
                .copied()
                .ok_or_else(|| DatasetError::Selection(format!("no importance for `{}`", f.name)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    Ok(dataset.project_indices(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn income_schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            Feature::continuous("age"),
            Feature::continuous("income"),
        ])
        .unwrap()
    }

    #[test]
    fn loads_three_rows() {
        let csv = "age,income,label\n40,60000,0\n27,80000,1\n22,1000,0\n";
        let ds = read_csv(csv.as_bytes(), &income_schema(), "label").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.schema.len(), 2);
        assert_eq!(ds.labels, vec![0, 1, 0]);
        assert_eq!(ds.rows[1].values, vec![27.0, 80000.0]);
        assert_eq!(ds.schema.features()[0].range(), Some([22.0, 40.0]));
    }

    #[test]
    fn binary_cell_out_of_range_names_row_and_column() {
        let schema =
            FeatureSchema::new(vec![Feature::continuous("age"), Feature::binary("smoker")])
                .unwrap();
        let csv = "age,smoker,label\n40,1,0\n27,2,1\n";
        match read_csv(csv.as_bytes(), &schema, "label") {
            Err(DatasetError::Cell { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "smoker");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_only_file_is_empty_dataset() {
        let ds = read_csv("age,income,label\n".as_bytes(), &income_schema(), "label").unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.schema.len(), 2);
    }

    #[test]
    fn reports_missing_column_and_bad_cells() {
        let err = read_csv("age,label\n1,0\n".as_bytes(), &income_schema(), "label").unwrap_err();
        assert!(matches!(err, DatasetError::MissingColumn(c) if c == "income"));
        let err = read_csv(
            "age,income,label\n1,abc,0\n".as_bytes(),
            &income_schema(),
            "label",
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::Cell { row: 1, ref column, .. } if column == "income"));
        let err = read_csv(
            "age,income,label\n1,,0\n".as_bytes(),
            &income_schema(),
            "label",
        )
        .unwrap_err();
        assert!(err.to_string().contains("missing value"));
        let err = read_csv(
            "age,income,y\n1,2,0\n".as_bytes(),
            &income_schema(),
            "label",
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::MissingColumn(c) if c == "label"));
    }

    #[test]
    fn unknown_level_is_rejected() {
        let schema =
            FeatureSchema::new(vec![Feature::categorical("nyha", ["I", "II", "III"])]).unwrap();
        let err = read_csv("nyha,label\nIV,0\n".as_bytes(), &schema, "label").unwrap_err();
        assert!(matches!(err, DatasetError::Cell { row: 1, ref column, .. } if column == "nyha"));
    }

    #[test]
    fn schema_invariants() {
        assert!(FeatureSchema::new(vec![Feature::categorical("c", ["only"])]).is_err());
        assert!(FeatureSchema::new(vec![Feature::binary("a"), Feature::continuous("a")]).is_err());
        // Collides with the expansion of `c`.
        assert!(FeatureSchema::new(vec![
            Feature::categorical("c", ["x", "y"]),
            Feature::binary("c_x")
        ])
        .is_err());
        let text = r#"{"features":[{"name":"age","kind":"continuous","range":[0,90]},
            {"name":"sex","kind":"binary"},{"name":"nyha","kind":"categorical","levels":["I","II"]}]}"#;
        let schema = FeatureSchema::from_json(text).unwrap();
        assert_eq!(schema.names(), vec!["age", "sex", "nyha"]);
        assert_eq!(FeatureSchema::from_json(&schema.to_json()).unwrap(), schema);
    }

    #[test]
    fn one_hot_expands_levels() {
        let schema = FeatureSchema::new(vec![
            Feature::continuous("age"),
            Feature::categorical("NYHA", ["I", "II", "III"]),
        ])
        .unwrap();
        let ds = read_csv(
            "age,NYHA,label\n50,II,1\n60,I,0\n".as_bytes(),
            &schema,
            "label",
        )
        .unwrap();
        let enc = one_hot_encode(&ds);
        assert_eq!(
            enc.schema.names(),
            vec!["age", "NYHA_I", "NYHA_II", "NYHA_III"]
        );
        assert_eq!(enc.rows[0].values, vec![50.0, 0.0, 1.0, 0.0]);
        assert_eq!(enc.labels, ds.labels);
        for row in &enc.rows {
            enc.schema.check_instance(row).unwrap();
        }
    }

    #[test]
    fn forty_nine_raw_features_expand_to_sixty_three() {
        // 30 binary + 12 continuous + 7 categorical whose level counts sum to 21.
        let mut features = Vec::new();
        features.extend((0..30).map(|i| Feature::binary(format!("b{i}"))));
        features.extend((0..12).map(|i| Feature::continuous_in(format!("c{i}"), 0.0, 1.0)));
        for (i, levels) in [3, 3, 3, 3, 3, 3, 3].iter().enumerate() {
            features.push(Feature::categorical(
                format!("k{i}"),
                (0..*levels).map(|l| l.to_string()),
            ));
        }
        let schema = FeatureSchema::new(features).unwrap();
        assert_eq!(schema.len(), 49);
        let ds = Dataset::new(schema, vec![], vec![]).unwrap();
        assert_eq!(one_hot_encode(&ds).schema.len(), 63);
    }

    #[test]
    fn no_categoricals_is_identity() {
        let ds = read_csv(
            "age,income,label\n1,2,0\n".as_bytes(),
            &income_schema(),
            "label",
        )
        .unwrap();
        assert_eq!(one_hot_encode(&ds), ds);
    }

    fn abc() -> Dataset {
        let schema = FeatureSchema::new(vec![
            Feature::continuous("a"),
            Feature::continuous("b"),
            Feature::continuous("c"),
        ])
        .unwrap();
        Dataset::new(schema, vec![Instance::new(vec![1.0, 2.0, 3.0])], vec![1]).unwrap()
    }

    fn importance(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn top_k_sorts_and_cuts() {
        let ds = abc();
        let imp = importance(&[("a", 0.5), ("b", 0.1), ("c", 0.4)]);
        let top = select_top_k(&ds, &imp, 2).unwrap();
        assert_eq!(top.schema.names(), vec!["a", "c"]);
        assert_eq!(top.rows[0].values, vec![1.0, 3.0]);
        assert_eq!(select_top_k(&ds, &imp, 3).unwrap(), ds);
        assert!(select_top_k(&ds, &imp, 0).is_err());
        assert!(select_top_k(&ds, &imp, 4).is_err());
    }

    #[test]
    fn top_k_ties_follow_schema_order() {
        let schema =
            FeatureSchema::new(vec![Feature::continuous("a"), Feature::continuous("b")]).unwrap();
        let ds = Dataset::new(schema, vec![], vec![]).unwrap();
        let top = select_top_k(&ds, &importance(&[("a", 0.3), ("b", 0.3)]), 1).unwrap();
        assert_eq!(top.schema.names(), vec!["a"]);
        // Reversed schema order flips the winner.
        let swapped = ds.project(&["b".to_string(), "a".to_string()]).unwrap();
        let top = select_top_k(&swapped, &importance(&[("a", 0.3), ("b", 0.3)]), 1).unwrap();
        assert_eq!(top.schema.names(), vec!["b"]);
    }
}
