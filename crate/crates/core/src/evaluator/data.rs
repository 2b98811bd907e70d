use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EvaluatorError;

/// Labeled examples, one feature vector per label.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Examples {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Examples {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn push(&mut self, x: Vec<f64>, y: usize) {
        self.features.push(x);
        self.labels.push(y);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Examples,
    pub validation: Examples,
    pub test: Examples,
    pub num_features: usize,
    pub num_classes: usize,
}

impl DatasetSplit {
    pub fn new(train: Examples, validation: Examples, test: Examples) -> Result<Self, EvaluatorError> {
        let parts = [("train", &train), ("validation", &validation), ("test", &test)];
        for (name, part) in parts {
            if part.is_empty() {
                return Err(EvaluatorError::InvalidDataset(format!("{name} split is empty")));
            }
        }
        let num_features = train.features[0].len();
        if num_features == 0 {
            return Err(EvaluatorError::InvalidDataset("examples have no features".into()));
        }
        for (name, part) in parts {
            if part.features.len() != part.labels.len() {
                return Err(EvaluatorError::InvalidDataset(format!("{name}: feature/label count mismatch")));
            }
            if let Some(bad) = part.features.iter().find(|x| x.len() != num_features) {
                return Err(EvaluatorError::InvalidDataset(format!(
                    "{name}: example with {} features, expected {num_features}",
                    bad.len()
                )));
            }
            if part.features.iter().flatten().any(|v| !v.is_finite()) {
                return Err(EvaluatorError::InvalidDataset(format!("{name}: non-finite feature")));
            }
        }
        let num_classes = parts
            .iter()
            .flat_map(|(_, p)| p.labels.iter())
            .max()
            .map_or(0, |m| m + 1);
        if num_classes < 2 {
            return Err(EvaluatorError::InvalidDataset("fewer than two classes".into()));
        }
        Ok(DatasetSplit {
            train,
            validation,
            test,
            num_features,
            num_classes,
        })
    }

    /// SHA-256 over every feature bit pattern and label, split by split.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for part in [&self.train, &self.validation, &self.test] {
            h.update((part.len() as u64).to_le_bytes());
            for (x, y) in part.features.iter().zip(&part.labels) {
                for v in x {
                    h.update(v.to_bits().to_le_bytes());
                }
                h.update((*y as u64).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyKind {
    /// A disc of radius 1 inside a ring of radius 2.
    Rings,
    /// Two clusters centred at (-1, -1) and (1, 1).
    Blobs,
    /// Four clusters at (±1, ±1); the label is whether the signs differ.
    Xor,
}

/// Splits each class 70/15/15 (rounded, test takes the remainder) after a
/// seeded shuffle, then shuffles each split.
fn stratify(by_class: Vec<Vec<Vec<f64>>>, rng: &mut ChaCha8Rng) -> Result<DatasetSplit, EvaluatorError> {
    let mut parts: [Vec<(Vec<f64>, usize)>; 3] = Default::default();
    for (label, mut xs) in by_class.into_iter().enumerate() {
        xs.shuffle(rng);
        let n = xs.len();
        let train = (70 * n + 50) / 100;
        let valid = (15 * n + 50) / 100;
        for (i, x) in xs.into_iter().enumerate() {
            let part = if i < train {
                0
            } else if i < train + valid {
                1
            } else {
                2
            };
            parts[part].push((x, label));
        }
    }
    let [train, validation, test] = parts.map(|mut p| {
        p.shuffle(rng);
        let mut ex = Examples::default();
        for (x, y) in p {
            ex.push(x, y);
        }
        ex
    });
    DatasetSplit::new(train, validation, test)
}

/// Deterministic two-class 2-D data with `n` points (`n / 2` per class,
/// class 0 takes the odd one) and Gaussian noise of standard deviation
/// `noise` on each coordinate.
pub fn make_toy_dataset(kind: ToyKind, n: usize, noise: f64, seed: u64) -> Result<DatasetSplit, EvaluatorError> {
    if n < 30 {
        return Err(EvaluatorError::InvalidDataset(format!("n = {n} is below 30")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(EvaluatorError::InvalidDataset(format!("noise {noise} must be non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let counts = [n - n / 2, n / 2];
    let mut by_class = vec![Vec::new(), Vec::new()];
    for (label, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let (x, y) = match kind {
                ToyKind::Blobs => {
                    let c = if label == 0 { -1.0 } else { 1.0 };
                    (c, c)
                }
                ToyKind::Xor => {
                    let sx = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    let sy = if label == 0 { sx } else { -sx };
                    (sx, sy)
                }
                ToyKind::Rings => {
                    let angle = rng.random_range(0.0..TAU);
                    let radius = if label == 0 {
                        rng.random::<f64>().sqrt()
                    } else {
                        2.0
                    };
                    (radius * angle.cos(), radius * angle.sin())
                }
            };
            let jitter = |rng: &mut ChaCha8Rng| noise * normal.sample(rng);
            let point = vec![x + jitter(&mut rng), y + jitter(&mut rng)];
            by_class[label].push(point);
        }
    }
    stratify(by_class, &mut rng)
}

/// Reads a CSV with a header row: every column other than `label` and
/// `split` is a numeric feature, `label` holds class indices, and the
/// optional `split` column (`train`, `valid` or `test`) assigns rows to
/// splits. Without it rows are split 70/15/15 per class using `seed`.
pub fn load_csv_dataset(path: &Path, seed: u64) -> Result<DatasetSplit, EvaluatorError> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_col = header
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| EvaluatorError::InvalidDataset("no `label` column".into()))?;
    let split_col = header.iter().position(|h| h == "split");
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&i| i != label_col && Some(i) != split_col)
        .collect();
    let mut by_split: BTreeMap<&'static str, Examples> = BTreeMap::new();
    let mut by_class: Vec<Vec<Vec<f64>>> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let bad = |what: &str| EvaluatorError::InvalidDataset(format!("line {line}: {what}"));
        let x = feature_cols
            .iter()
            .map(|&i| record[i].trim().parse::<f64>().map_err(|_| bad(&format!("`{}` is not a number", &record[i]))))
            .collect::<Result<Vec<f64>, _>>()?;
        let y: usize = record[label_col]
            .trim()
            .parse()
            .map_err(|_| bad(&format!("label `{}` is not a class index", &record[label_col])))?;
        match split_col {
            Some(c) => {
                let part = match record[c].trim() {
                    "train" => "train",
                    "valid" => "valid",
                    "test" => "test",
                    other => return Err(bad(&format!("unknown split `{other}`"))),
                };
                by_split.entry(part).or_default().push(x, y);
            }
            None => {
                if by_class.len() <= y {
                    by_class.resize(y + 1, Vec::new());
                }
                by_class[y].push(x);
            }
        }
    }
    if split_col.is_some() {
        let mut take = |k| by_split.remove(k).unwrap_or_default();
        let (train, valid, test) = (take("train"), take("valid"), take("test"));
        DatasetSplit::new(train, valid, test)
    } else {
        stratify(by_class, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}
