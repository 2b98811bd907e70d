//! Variation operators.
//!
//! Crossovers and mutations are strategies behind the [`Crossover`] and
//! [`Mutation`] traits, registered by name in an [`OperatorRegistry`].
//! [`apply_variation`] composes them at the configured rates.
//!
//! Every operator is pure with respect to its inputs: parents are borrowed and
//! offspring are fresh values with their fitness cleared and a lineage tag
//! describing what was done.

mod crossover;
mod mutation;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genotype::{GenotypeError, Individual, Lineage, DEFAULT_DEPTH_LIMIT};
use crate::grammar::Grammar;
use crate::structure::GaStructure;

pub use crossover::{bitmask_crossover, bitmask_with, one_point_at, one_point_crossover, Bitmask, OnePoint};
pub use mutation::{
    mutate_add_layer, mutate_grammatical, mutate_numeric, mutate_remove_layer,
    mutate_replicate_layer, AddLayer, GrammaticalMutation, NumericMutation, RemoveLayer,
    ReplicateLayer,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("parents have different structures")]
    StructureMismatch,
    #[error("module {0} is already at its maximum number of layers")]
    AtMaxLayers(usize),
    #[error("module {0} is already at its minimum number of layers")]
    AtMinLayers(usize),
    #[error("no eligible mutation site")]
    NoEligibleSite,
    #[error("no module {0}")]
    NoSuchModule(usize),
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("invalid operator configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Genotype(#[from] GenotypeError),
}

pub const MUTATION_NAMES: [&str; 5] = [
    "add-layer",
    "replicate-layer",
    "remove-layer",
    "grammatical",
    "numeric",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Probability of bit-mask (rather than one-point) crossover when a
    /// crossover fires.
    pub bitmask_vs_onepoint: f64,
    /// Float mutation standard deviation as a fraction of the block's range.
    pub gaussian_sigma_fraction: f64,
    pub depth_limit: usize,
    /// Names of the mutation categories in use.
    pub mutations: Vec<String>,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            crossover_rate: 0.7,
            mutation_rate: 0.3,
            bitmask_vs_onepoint: 0.5,
            gaussian_sigma_fraction: 0.15,
            depth_limit: DEFAULT_DEPTH_LIMIT,
            mutations: MUTATION_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl OperatorConfig {
    pub fn validate(&self) -> Result<(), OperatorError> {
        for (name, p) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
            ("bitmask_vs_onepoint", self.bitmask_vs_onepoint),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(OperatorError::InvalidConfig(format!("{name} = {p} is not a probability")));
            }
        }
        if !(self.gaussian_sigma_fraction > 0.0 && self.gaussian_sigma_fraction.is_finite()) {
            return Err(OperatorError::InvalidConfig(format!(
                "gaussian_sigma_fraction = {} must be positive",
                self.gaussian_sigma_fraction
            )));
        }
        if self.depth_limit == 0 {
            return Err(OperatorError::InvalidConfig("depth_limit must be positive".into()));
        }
        OperatorRegistry::from_config(self).map(|_| ())
    }
}

/// Everything a mutation may consult besides the individual itself.
pub struct VariationContext<'a> {
    pub grammar: &'a Grammar,
    pub structure: &'a GaStructure,
    pub config: &'a OperatorConfig,
}

pub trait Crossover: Send + Sync {
    fn name(&self) -> &'static str;

    fn cross(
        &self,
        p1: &Individual,
        p2: &Individual,
        rng: &mut dyn RngCore,
    ) -> Result<(Individual, Individual), OperatorError>;
}

pub trait Mutation: Send + Sync {
    fn name(&self) -> &'static str;

    /// Returns the mutated copy, or an error when the mutation cannot apply
    /// to this individual (`AtMaxLayers`, `AtMinLayers`, `NoEligibleSite`).
    fn mutate(
        &self,
        ind: &Individual,
        ctx: &VariationContext<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<Individual, OperatorError>;
}

pub struct OperatorRegistry {
    one_point: Box<dyn Crossover>,
    bitmask: Box<dyn Crossover>,
    mutations: Vec<Box<dyn Mutation>>,
}

impl OperatorRegistry {
    /// Both crossovers and all five mutations.
    pub fn standard() -> Self {
        OperatorRegistry {
            one_point: Box::new(OnePoint),
            bitmask: Box::new(Bitmask),
            mutations: MUTATION_NAMES
                .iter()
                .map(|n| mutation_by_name(n).expect("built-in"))
                .collect(),
        }
    }

    pub fn from_config(cfg: &OperatorConfig) -> Result<Self, OperatorError> {
        let mut registry = Self::standard();
        registry.mutations = cfg
            .mutations
            .iter()
            .map(|n| mutation_by_name(n).ok_or_else(|| OperatorError::UnknownOperator(n.clone())))
            .collect::<Result<_, _>>()?;
        Ok(registry)
    }

    pub fn mutation(&self, name: &str) -> Option<&dyn Mutation> {
        self.mutations.iter().find(|m| m.name() == name).map(|m| m.as_ref())
    }

    pub fn mutation_names(&self) -> Vec<&'static str> {
        self.mutations.iter().map(|m| m.name()).collect()
    }

    pub fn crossover(&self, name: &str) -> Option<&dyn Crossover> {
        [&self.one_point, &self.bitmask]
            .into_iter()
            .find(|c| c.name() == name)
            .map(|c| c.as_ref())
    }
}

pub fn mutation_by_name(name: &str) -> Option<Box<dyn Mutation>> {
    Some(match name {
        "add-layer" => Box::new(AddLayer),
        "replicate-layer" => Box::new(ReplicateLayer),
        "remove-layer" => Box::new(RemoveLayer),
        "grammatical" => Box::new(GrammaticalMutation),
        "numeric" => Box::new(NumericMutation),
        _ => return None,
    })
}

/// Fresh offspring value: fitness cleared, lineage seeded from the parents.
pub(crate) fn offspring_of(base: &Individual, parents: &[&Individual]) -> Individual {
    let mut child = base.deep_copy();
    child.fitness = None;
    child.lineage = Some(Lineage {
        parents: parents.iter().map(|p| p.id).collect(),
        operators: Vec::new(),
    });
    child
}

pub(crate) fn push_tag(ind: &mut Individual, tag: String) {
    ind.lineage
        .get_or_insert_with(|| Lineage {
            parents: vec![ind.id],
            operators: Vec::new(),
        })
        .operators
        .push(tag);
}

pub(crate) fn check_compatible(p1: &Individual, p2: &Individual) -> Result<(), OperatorError> {
    let same = p1.modules.len() == p2.modules.len()
        && p1
            .modules
            .iter()
            .zip(&p2.modules)
            .all(|(a, b)| a.structure_index == b.structure_index);
    if same {
        Ok(())
    } else {
        Err(OperatorError::StructureMismatch)
    }
}

/// Produces two offspring from two parents.
///
/// With probability `crossover_rate` one crossover fires (bit-mask with
/// probability `bitmask_vs_onepoint`, else one-point); otherwise the
/// offspring are copies. Then each offspring independently, with probability
/// `mutation_rate`, receives exactly one mutation whose category is drawn
/// uniformly, redrawing among the remaining categories while the drawn one
/// is inapplicable. An offspring no category applies to passes unchanged.
pub fn apply_variation(
    p1: &Individual,
    p2: &Individual,
    ctx: &VariationContext<'_>,
    registry: &OperatorRegistry,
    rng: &mut dyn RngCore,
) -> Result<(Individual, Individual), OperatorError> {
    let cfg = ctx.config;
    let (mut o1, mut o2) = if rng.random_bool(cfg.crossover_rate) {
        if rng.random_bool(cfg.bitmask_vs_onepoint) {
            registry.bitmask.cross(p1, p2, rng)?
        } else {
            registry.one_point.cross(p1, p2, rng)?
        }
    } else {
        (offspring_of(p1, &[p1]), offspring_of(p2, &[p2]))
    };
    for child in [&mut o1, &mut o2] {
        if rng.random_bool(cfg.mutation_rate) {
            if let Some(mut mutated) = mutate_any(child, ctx, registry, rng) {
                // keep the crossover's parents and tags ahead of the mutation's
                let tags = mutated.lineage.take().map(|l| l.operators).unwrap_or_default();
                let mut lineage = child.lineage.take().unwrap_or_default();
                lineage.operators.extend(tags);
                mutated.lineage = Some(lineage);
                *child = mutated;
            }
        }
    }
    Ok((o1, o2))
}

fn mutate_any(
    ind: &Individual,
    ctx: &VariationContext<'_>,
    registry: &OperatorRegistry,
    rng: &mut dyn RngCore,
) -> Option<Individual> {
    let mut candidates: Vec<&dyn Mutation> = registry.mutations.iter().map(|m| m.as_ref()).collect();
    while !candidates.is_empty() {
        let pick = candidates.swap_remove(rng.random_range(0..candidates.len()));
        if let Ok(mutated) = pick.mutate(ind, ctx, rng) {
            return Some(mutated);
        }
    }
    None
}

/// Operator tags on an individual's lineage that name a crossover.
pub fn is_crossover_tag(tag: &str) -> bool {
    tag.starts_with("one-point") || tag.starts_with("bitmask")
}

/// Operator tags on an individual's lineage that name a mutation.
pub fn is_mutation_tag(tag: &str) -> bool {
    MUTATION_NAMES.iter().any(|m| tag.starts_with(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::random_individual;
    use crate::grammar::parse_grammar;
    use crate::structure::parse_structure;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mutation_after_crossover_keeps_both_tags() {
        let g = parse_grammar(include_str!("../../fixtures/cnn.grammar")).unwrap();
        let s = parse_structure(include_str!("../../fixtures/cnn.structure")).unwrap();
        let cfg = OperatorConfig {
            crossover_rate: 1.0,
            mutation_rate: 1.0,
            ..OperatorConfig::default()
        };
        let ctx = VariationContext {
            grammar: &g,
            structure: &s,
            config: &cfg,
        };
        let registry = OperatorRegistry::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p1 = random_individual(&g, &s, &mut rng).unwrap();
        let mut p2 = random_individual(&g, &s, &mut rng).unwrap();
        p1.id = 4;
        p2.id = 9;
        for _ in 0..50 {
            let (o1, o2) = apply_variation(&p1, &p2, &ctx, &registry, &mut rng).unwrap();
            for o in [o1, o2] {
                let lineage = o.lineage.unwrap();
                assert_eq!(lineage.parents, [4, 9]);
                assert_eq!(lineage.operators.len(), 2, "{:?}", lineage.operators);
                assert!(is_crossover_tag(&lineage.operators[0]));
                assert!(is_mutation_tag(&lineage.operators[1]));
            }
        }
    }
}
