use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::Value;

use super::{parse_params, EvaluationBudget, EvaluatorError, EvaluatorFactory, FitnessEvaluator, FitnessReport};
use crate::phenotype::{parse_rendered, LayerDescriptor, NetworkDescriptor};

/// The network the surrogate rewards similarity to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurrogateTarget {
    pub layers: Vec<LayerDescriptor>,
}

impl SurrogateTarget {
    /// From rendered layer lines.
    pub fn from_lines<S: AsRef<str>>(lines: &[S]) -> Result<Self, EvaluatorError> {
        let text: Vec<&str> = lines.iter().map(|l| l.as_ref()).collect();
        let nd = parse_rendered(&text.join("\n")).map_err(|e| EvaluatorError::InvalidSpec(e.to_string()))?;
        if nd.layers.is_empty() {
            return Err(EvaluatorError::InvalidSpec("surrogate target has no layers".into()));
        }
        Ok(SurrogateTarget { layers: nd.layers })
    }
}

/// `exp(-|n - n*| / n*)` times the fraction of the target's attributes that
/// the candidate reproduces exactly, counted over the positions both have.
/// A candidate with no layers scores 0.
pub fn surrogate_fitness(nd: &NetworkDescriptor, target: &SurrogateTarget) -> f64 {
    let n = nd.layers.len() as f64;
    let n_star = target.layers.len() as f64;
    if nd.layers.is_empty() || target.layers.is_empty() {
        return 0.0;
    }
    let (mut matched, mut total) = (0usize, 0usize);
    for (cand, want) in nd.layers.iter().zip(&target.layers) {
        total += want.attrs.len();
        matched += want
            .attrs
            .iter()
            .filter(|(k, v)| cand.get(k) == Some(v.as_str()))
            .count();
    }
    let fraction = if total == 0 { 0.0 } else { matched as f64 / total as f64 };
    (-(n - n_star).abs() / n_star).exp() * fraction
}

pub struct SurrogateEvaluator {
    target: SurrogateTarget,
}

impl SurrogateEvaluator {
    pub fn new(target: SurrogateTarget) -> Self {
        SurrogateEvaluator { target }
    }

    pub fn target(&self) -> &SurrogateTarget {
        &self.target
    }
}

impl FitnessEvaluator for SurrogateEvaluator {
    fn name(&self) -> &'static str {
        "surrogate"
    }

    fn evaluate(&self, nd: &NetworkDescriptor, _budget: &EvaluationBudget) -> FitnessReport {
        FitnessReport::valid(surrogate_fitness(nd, &self.target))
    }

    fn fingerprint(&self) -> String {
        let lines: Vec<String> = self.target.layers.iter().map(|l| l.to_string()).collect();
        format!("surrogate\n{}", lines.join("\n"))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    target: Vec<String>,
}

pub(super) struct Factory;

impl EvaluatorFactory for Factory {
    fn kind(&self) -> &'static str {
        "surrogate"
    }

    fn build(&self, params: Value, _base_dir: &Path) -> Result<Arc<dyn FitnessEvaluator>, EvaluatorError> {
        let p: Params = parse_params(params)?;
        Ok(Arc::new(SurrogateEvaluator::new(SurrogateTarget::from_lines(&p.target)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nd(lines: &[&str]) -> NetworkDescriptor {
        parse_rendered(&lines.join("\n")).unwrap()
    }

    const FC: &str = "layer:fc act:relu num-units:8 bias:True";
    const POOL: &str = "layer:pool-max kernel-size:3 stride:2 padding:valid";

    #[test]
    fn exact_match_is_one() {
        let t = SurrogateTarget::from_lines(&[POOL, FC]).unwrap();
        assert_eq!(surrogate_fitness(&nd(&[POOL, FC]), &t), 1.0);
    }

    #[test]
    fn no_shared_attrs_is_zero() {
        let t = SurrogateTarget::from_lines(&[POOL]).unwrap();
        assert_eq!(surrogate_fitness(&nd(&["other:1"]), &t), 0.0);
    }

    #[test]
    fn length_penalty() {
        let t = SurrogateTarget::from_lines(&[FC, FC, FC, FC]).unwrap();
        let f = surrogate_fitness(&nd(&[FC, FC, FC, FC, POOL, POOL]), &t);
        assert!((f - (-0.5f64).exp()).abs() < 1e-15);
        assert!((f - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn partial_match_fraction() {
        let t = SurrogateTarget::from_lines(&[FC]).unwrap();
        let f = surrogate_fitness(&nd(&["layer:fc act:relu num-units:9 bias:False"]), &t);
        assert_eq!(f, 0.5);
    }
}
