//! Fitness evaluation.
//!
//! An evaluator turns a decoded network into a [`FitnessReport`]. Two are
//! built in: a deterministic similarity score against a target network
//! (`surrogate`) and a small dense-network trainer on tabular data (`dense`).
//! Evaluators are created from JSON objects through an [`EvaluatorRegistry`]
//! keyed by the evaluator object's `kind`.

mod data;
mod dense;
mod mlp;
mod surrogate;

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::phenotype::NetworkDescriptor;

pub use data::{load_csv_dataset, make_toy_dataset, DatasetSplit, Examples, ToyKind};
pub use dense::{
    argmax, ensemble_confidences, ensemble_predict, test_accuracy, train_dense, train_model,
    DenseEvaluator, TrainedNetwork,
};
pub use mlp::{Activation, DenseLayer, Gradients, Mlp};
pub use surrogate::{surrogate_fitness, SurrogateEvaluator, SurrogateTarget};

#[derive(Debug, Error)]
pub enum EvaluatorError {
    #[error("invalid evaluation budget: {0}")]
    InvalidBudget(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid evaluator configuration: {0}")]
    InvalidSpec(String),
    #[error("unknown evaluator kind `{0}`")]
    UnknownKind(String),
    #[error("models disagree on output arity ({0} vs {1})")]
    ArityMismatch(usize, usize),
    #[error("an ensemble needs at least one model")]
    EmptyEnsemble,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationBudget {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub eval_seed: u64,
    /// Fitness is the best validation accuracy over epochs when set, the
    /// final epoch's otherwise.
    #[serde(default = "default_true")]
    pub best_epoch: bool,
}

impl Default for EvaluationBudget {
    fn default() -> Self {
        EvaluationBudget {
            epochs: 10,
            batch_size: 125,
            learning_rate: 0.01,
            momentum: 0.9,
            eval_seed: 0,
            best_epoch: true,
        }
    }
}

impl EvaluationBudget {
    pub fn validate(&self) -> Result<(), EvaluatorError> {
        if self.epochs == 0 {
            return Err(EvaluatorError::InvalidBudget("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(EvaluatorError::InvalidBudget("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EvaluatorError::InvalidBudget(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(EvaluatorError::InvalidBudget(format!(
                "momentum {} must lie in [0, 1)",
                self.momentum
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub train_accuracy: Option<f64>,
    pub elapsed: Duration,
    pub failure: Option<String>,
}

/// Equality ignores `diagnostics.elapsed`, which is wall-clock.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitnessReport {
    pub fitness: f64,
    pub valid: bool,
    pub diagnostics: Diagnostics,
}

impl PartialEq for FitnessReport {
    fn eq(&self, other: &Self) -> bool {
        self.fitness.to_bits() == other.fitness.to_bits()
            && self.valid == other.valid
            && self.diagnostics.train_accuracy.map(f64::to_bits)
                == other.diagnostics.train_accuracy.map(f64::to_bits)
            && self.diagnostics.failure == other.diagnostics.failure
    }
}

impl FitnessReport {
    pub fn valid(fitness: f64) -> Self {
        FitnessReport {
            fitness,
            valid: true,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn invalid(reason: impl Into<String>) -> Self {
        FitnessReport {
            fitness: 0.0,
            valid: false,
            diagnostics: Diagnostics {
                failure: Some(reason.into()),
                ..Diagnostics::default()
            },
        }
    }
}

pub trait FitnessEvaluator: Send + Sync {
    fn name(&self) -> &'static str;

    /// Must be deterministic in `(nd, budget)` and safe to call concurrently.
    fn evaluate(&self, nd: &NetworkDescriptor, budget: &EvaluationBudget) -> FitnessReport;

    /// Stable summary of everything that affects fitness besides the inputs,
    /// used to detect a changed setup on resume.
    fn fingerprint(&self) -> String;

    /// Rejects budgets this evaluator cannot honour.
    fn check_budget(&self, budget: &EvaluationBudget) -> Result<(), EvaluatorError> {
        budget.validate()
    }
}

pub trait EvaluatorFactory: Send + Sync {
    fn kind(&self) -> &'static str;

    /// Builds an evaluator from the evaluator object minus its `kind` key.
    /// Relative paths resolve against `base_dir`.
    fn build(&self, params: Value, base_dir: &Path) -> Result<Arc<dyn FitnessEvaluator>, EvaluatorError>;
}

pub struct EvaluatorRegistry {
    factories: Vec<Box<dyn EvaluatorFactory>>,
}

impl EvaluatorRegistry {
    pub fn empty() -> Self {
        EvaluatorRegistry { factories: Vec::new() }
    }

    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(surrogate::Factory));
        r.register(Box::new(dense::Factory));
        r
    }

    /// Adds a factory, replacing any with the same kind.
    pub fn register(&mut self, factory: Box<dyn EvaluatorFactory>) {
        self.factories.retain(|f| f.kind() != factory.kind());
        self.factories.push(factory);
    }

    pub fn kinds(&self) -> Vec<&'static str> {
        self.factories.iter().map(|f| f.kind()).collect()
    }

    pub fn build(&self, spec: &Value, base_dir: &Path) -> Result<Arc<dyn FitnessEvaluator>, EvaluatorError> {
        let mut params = spec
            .as_object()
            .cloned()
            .ok_or_else(|| EvaluatorError::InvalidSpec("expected an object".into()))?;
        let kind = match params.remove("kind") {
            Some(Value::String(k)) => k,
            _ => return Err(EvaluatorError::InvalidSpec("missing string field `kind`".into())),
        };
        let factory = self
            .factories
            .iter()
            .find(|f| f.kind() == kind)
            .ok_or(EvaluatorError::UnknownKind(kind))?;
        factory.build(Value::Object(params), base_dir)
    }
}

pub(crate) fn parse_params<T: serde::de::DeserializeOwned>(params: Value) -> Result<T, EvaluatorError> {
    serde_json::from_value(params).map_err(|e| EvaluatorError::InvalidSpec(e.to_string()))
}
