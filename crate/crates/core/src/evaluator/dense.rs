use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::data::{load_csv_dataset, make_toy_dataset, DatasetSplit, Examples, ToyKind};
use super::mlp::{Activation, Gradients, Mlp};
use super::{parse_params, EvaluationBudget, EvaluatorError, EvaluatorFactory, FitnessEvaluator, FitnessReport};
use crate::phenotype::{apply_output_override, NetworkDescriptor};

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn accuracy(model: &Mlp, data: &Examples) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = data
        .features
        .iter()
        .zip(&data.labels)
        .filter(|(x, &y)| argmax(&model.predict_proba(x)) == y)
        .count();
    hits as f64 / data.len() as f64
}

/// Fraction of the test split classified correctly.
pub fn test_accuracy(model: &Mlp, split: &DatasetSplit) -> f64 {
    accuracy(model, &split.test)
}

/// Per-input mean of the models' confidence vectors.
pub fn ensemble_confidences(models: &[&Mlp], inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, EvaluatorError> {
    let first = models.first().ok_or(EvaluatorError::EmptyEnsemble)?;
    if let Some(m) = models.iter().find(|m| m.outputs() != first.outputs()) {
        return Err(EvaluatorError::ArityMismatch(first.outputs(), m.outputs()));
    }
    let k = models.len() as f64;
    Ok(inputs
        .iter()
        .map(|x| {
            let mut sum = vec![0.0; first.outputs()];
            for m in models {
                for (s, p) in sum.iter_mut().zip(m.predict_proba(x)) {
                    *s += p;
                }
            }
            sum.iter().map(|s| s / k).collect()
        })
        .collect())
}

/// Argmax of the averaged confidences, lowest class on ties.
pub fn ensemble_predict(models: &[&Mlp], inputs: &[Vec<f64>]) -> Result<Vec<usize>, EvaluatorError> {
    Ok(ensemble_confidences(models, inputs)?
        .iter()
        .map(|c| argmax(c))
        .collect())
}

/// A training outcome; `model` holds the weights of the epoch that produced
/// the reported fitness and is `None` for invalid networks.
#[derive(Debug, Clone)]
pub struct TrainedNetwork {
    pub report: FitnessReport,
    pub model: Option<Mlp>,
}

struct Hyper {
    lr: f64,
    momentum: f64,
    batch_size: usize,
}

/// Budget values, overridden by `lr`, `momentum` and `batch-size` from the
/// descriptor's learning section when present.
fn hyper_parameters(nd: &NetworkDescriptor, budget: &EvaluationBudget) -> Result<Hyper, String> {
    let lookup = |key: &str| -> Result<Option<f64>, String> {
        nd.learning_attr(key)
            .map(|raw| raw.parse::<f64>().map_err(|_| format!("bad-learning-attr: {key}={raw}")))
            .transpose()
    };
    let lr = lookup("lr")?.unwrap_or(budget.learning_rate);
    let momentum = lookup("momentum")?.unwrap_or(budget.momentum);
    let batch = lookup("batch-size")?.map_or(budget.batch_size as f64, |b| b);
    if !(lr >= 0.0 && lr.is_finite()) || !(0.0..1.0).contains(&momentum) || !(batch >= 1.0 && batch.fract() == 0.0) {
        return Err("bad-learning-attr".into());
    }
    Ok(Hyper {
        lr,
        momentum,
        batch_size: batch as usize,
    })
}

/// Per-layer `(units, bias, activation)` for a dense-only descriptor.
fn layer_spec(nd: &NetworkDescriptor) -> Result<Vec<(usize, bool, Activation)>, String> {
    if nd.layers.is_empty() {
        return Err("no-layers".into());
    }
    let last = nd.layers.len() - 1;
    nd.layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if !l.is_dense() {
                return Err(format!("unsupported-layer: {} at layer {i}", l.kind));
            }
            let act = l
                .get("act")
                .and_then(Activation::parse)
                .ok_or_else(|| format!("unsupported-layer: activation at layer {i}"))?;
            if (act == Activation::Softmax) != (i == last) {
                return Err(format!("unsupported-layer: softmax must be last, layer {i}"));
            }
            let units = l
                .get("num-units")
                .and_then(|u| u.parse::<usize>().ok())
                .filter(|&u| u >= 1)
                .ok_or_else(|| format!("shape: num-units at layer {i}"))?;
            let bias = match l.get("bias") {
                None | Some("True") => true,
                Some("False") => false,
                Some(other) => return Err(format!("unsupported-layer: bias {other} at layer {i}")),
            };
            Ok((units, bias, act))
        })
        .collect()
}

/// Trains the network the descriptor describes and scores it by validation
/// accuracy.
///
/// Only `fc` layers are supported, the last with softmax; the output layer is
/// resized to the dataset's class count. Weights are Glorot-uniform from
/// `budget.eval_seed`, which also drives the per-epoch shuffles. Validation
/// accuracy is measured after every epoch.
pub fn train_model(nd: &NetworkDescriptor, split: &DatasetSplit, budget: &EvaluationBudget) -> TrainedNetwork {
    let started = Instant::now();
    let mut out = train_inner(nd, split, budget);
    out.report.diagnostics.elapsed = started.elapsed();
    out
}

fn invalid(reason: impl Into<String>) -> TrainedNetwork {
    TrainedNetwork {
        report: FitnessReport::invalid(reason),
        model: None,
    }
}

fn train_inner(nd: &NetworkDescriptor, split: &DatasetSplit, budget: &EvaluationBudget) -> TrainedNetwork {
    if let Err(e) = budget.validate() {
        return invalid(e.to_string());
    }
    let nd = match apply_output_override(nd, split.num_classes) {
        Ok(nd) => nd,
        Err(e) => return invalid(format!("unsupported-layer: {e}")),
    };
    let spec = match layer_spec(&nd) {
        Ok(s) => s,
        Err(reason) => return invalid(reason),
    };
    let hyper = match hyper_parameters(&nd, budget) {
        Ok(h) => h,
        Err(reason) => return invalid(reason),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(budget.eval_seed);
    let mut model = Mlp::new(split.num_features, &spec, &mut rng);
    let mut velocity = Gradients::zeros_like(&model);
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let batch_size = hyper.batch_size.min(order.len());
    let mut best: Option<(f64, Mlp)> = None;
    for _ in 0..budget.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| split.train.features[i].as_slice()).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| split.train.labels[i]).collect();
            let (loss, grad) = model.loss_and_gradient(&xs, &ys);
            if !loss.is_finite() {
                return invalid("numerical-failure: non-finite loss");
            }
            model.momentum_step(&grad, &mut velocity, hyper.lr, hyper.momentum);
        }
        if model.parameters().iter().any(|p| !p.is_finite()) {
            return invalid("numerical-failure: non-finite weights");
        }
        let val = accuracy(&model, &split.validation);
        let better = match &best {
            None => true,
            Some((b, _)) => !budget.best_epoch || val > *b,
        };
        if better {
            best = Some((val, model.clone()));
        }
    }
    let (fitness, chosen) = best.expect("at least one epoch");
    let mut report = FitnessReport::valid(fitness);
    report.diagnostics.train_accuracy = Some(accuracy(&chosen, &split.train));
    TrainedNetwork {
        report,
        model: Some(chosen),
    }
}

pub fn train_dense(nd: &NetworkDescriptor, split: &DatasetSplit, budget: &EvaluationBudget) -> FitnessReport {
    train_model(nd, split, budget).report
}

/// Trains dense networks on a fixed dataset split.
pub struct DenseEvaluator {
    split: Arc<DatasetSplit>,
    digest: String,
}

impl DenseEvaluator {
    pub fn new(split: Arc<DatasetSplit>) -> Self {
        let digest = split.digest();
        DenseEvaluator { split, digest }
    }

    pub fn split(&self) -> &DatasetSplit {
        &self.split
    }
}

impl FitnessEvaluator for DenseEvaluator {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn evaluate(&self, nd: &NetworkDescriptor, budget: &EvaluationBudget) -> FitnessReport {
        train_dense(nd, &self.split, budget)
    }

    fn fingerprint(&self) -> String {
        format!("dense\n{}", self.digest)
    }

    fn check_budget(&self, budget: &EvaluationBudget) -> Result<(), EvaluatorError> {
        budget.validate()?;
        if budget.batch_size > self.split.train.len() {
            return Err(EvaluatorError::InvalidBudget(format!(
                "batch_size {} exceeds the {} training examples",
                budget.batch_size,
                self.split.train.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum DatasetSpec {
    Toy {
        toy: ToyKind,
        n: usize,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        csv: PathBuf,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    dataset: DatasetSpec,
}

pub(super) struct Factory;

impl EvaluatorFactory for Factory {
    fn kind(&self) -> &'static str {
        "dense"
    }

    fn build(&self, params: Value, base_dir: &Path) -> Result<Arc<dyn FitnessEvaluator>, EvaluatorError> {
        let p: Params = parse_params(params)?;
        let split = match p.dataset {
            DatasetSpec::Toy { toy, n, noise, seed } => make_toy_dataset(toy, n, noise, seed)?,
            DatasetSpec::Csv { csv, seed } => load_csv_dataset(&base_dir.join(csv), seed)?,
        };
        Ok(Arc::new(DenseEvaluator::new(Arc::new(split))))
    }
}
