//! Deterministic synthetic datasets with mixed feature kinds, used to
//! exercise the pipeline without external data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, Feature, FeatureSchema, Instance};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub continuous: usize,
    pub binary: usize,
    /// Level count of each categorical feature.
    pub categorical: Vec<usize>,
    /// Number of rows labelled 1.
    pub positives: usize,
    /// Standard deviation of the label noise added to the latent score.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 120 rows, 20 features after one-hot encoding, 19 positives.
    pub fn clinical_shaped(seed: u64) -> Self {
        SyntheticSpec {
            rows: 120,
            continuous: 11,
            binary: 6,
            categorical: vec![3],
            positives: 19,
            noise: 0.5,
            seed,
        }
    }
}

/// Builds a raw dataset (categoricals unencoded). Labels mark the
/// `positives` rows with the highest latent score, where the score is a
/// sparse random linear function of the features plus Gaussian-ish noise.
pub fn synthetic_dataset(spec: &SyntheticSpec) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut features = Vec::new();
    let mut scales = Vec::new();
    for i in 0..spec.continuous {
        features.push(Feature::continuous(format!("c{i}")));
        // Mixed magnitudes, some integer-valued.
        scales.push(match i % 3 {
            0 => 1.0,
            1 => 10.0,
            _ => 1000.0,
        });
    }
    for i in 0..spec.binary {
        features.push(Feature::binary(format!("b{i}")));
        scales.push(1.0);
    }
    for (i, &levels) in spec.categorical.iter().enumerate() {
        features.push(Feature::categorical(
            format!("k{i}"),
            (0..levels).map(|l| format!("L{l}")),
        ));
        scales.push(1.0);
    }
    let schema = FeatureSchema::new(features).expect("generated names are unique");

    let n = schema.len();
    let weights: Vec<f64> = (0..n)
        .map(|j| {
            if j % 3 == 1 {
                0.0
            } else {
                rng.gen_range(-1.0..1.0)
            }
        })
        .collect();
    let mut rows = Vec::with_capacity(spec.rows);
    let mut scores = Vec::with_capacity(spec.rows);
    for _ in 0..spec.rows {
        let mut values = Vec::with_capacity(n);
        let mut score = 0.0;
        for (j, f) in schema.features().iter().enumerate() {
            let v = match &f.kind {
                crate::dataset::FeatureKind::Continuous { .. } => {
                    let u: f64 = rng.gen_range(0.0..1.0);
                    if scales[j] >= 1000.0 {
                        (u * scales[j]).round()
                    } else {
                        (u * scales[j] * 100.0).round() / 100.0
                    }
                }
                crate::dataset::FeatureKind::Binary { .. } => f64::from(rng.gen_range(0..2u8)),
                crate::dataset::FeatureKind::Categorical { levels } => {
                    rng.gen_range(0..levels.len()) as f64
                }
            };
            score += weights[j] * v / scales[j];
            values.push(v);
        }
        // Sum of uniforms as cheap bell-shaped noise.
        let noise: f64 = (0..4).map(|_| rng.gen_range(-0.5..0.5)).sum::<f64>() * spec.noise;
        scores.push(score + noise);
        rows.push(Instance::new(values));
    }
    let mut order: Vec<usize> = (0..spec.rows).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut labels = vec![0u8; spec.rows];
    for &i in order.iter().take(spec.positives) {
        labels[i] = 1;
    }
    Dataset::new(schema, rows, labels).expect("generated rows satisfy the schema")
}
