//! The generational loop: initialization, tournament selection, variation,
//! elitism, evaluation and per-generation statistics.
//!
//! All randomness comes from streams keyed off the master seed (see
//! [`crate::rng`]), so a run is reproducible for any number of evaluation
//! threads and can be resumed from any generation's checkpoint.

mod checkpoint;

use std::path::PathBuf;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evaluator::{EvaluationBudget, EvaluatorError, FitnessEvaluator};
use crate::genotype::{decode_individual, random_individual_with_limit, GenotypeError, Individual};
use crate::grammar::Grammar;
use crate::operators::{apply_variation, OperatorConfig, OperatorError, OperatorRegistry, VariationContext};
use crate::phenotype::NetworkDescriptor;
use crate::rng::{derive_seed, stream, Purpose};
use crate::stats::{GenerationStats, StatsError};
use crate::structure::{GaStructure, StructureError};

pub use checkpoint::{run_in_directory, Checkpoint, RunDirectory};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("structure does not fit the grammar: {}", join(.0))]
    Structure(Vec<StructureError>),
    #[error("individual {0} has not been evaluated")]
    UnevaluatedIndividual(u64),
    #[error("empty population")]
    EmptyPopulation,
    #[error("checkpoint was written for a different configuration (hash {found}, expected {expected})")]
    ConfigMismatch { expected: String, found: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("no checkpoint in {0}")]
    NoCheckpoint(PathBuf),
    #[error(transparent)]
    Genotype(#[from] GenotypeError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Evaluator(#[from] EvaluatorError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn join(errors: &[StructureError]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub elite_fraction: f64,
    pub operators: OperatorConfig,
    pub budget: EvaluationBudget,
    pub master_seed: u64,
    /// Evaluation threads; does not affect results.
    pub parallel_evaluations: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 100,
            generations: 100,
            tournament_size: 3,
            elite_fraction: 0.01,
            operators: OperatorConfig::default(),
            budget: EvaluationBudget::default(),
            master_seed: 0,
            parallel_evaluations: 1,
        }
    }
}

impl EvolutionConfig {
    /// `ceil(elite_fraction * population_size)`, tolerant of rounding noise
    /// in the product.
    pub fn elite_count(&self) -> usize {
        let e = self.elite_fraction * self.population_size as f64;
        (e - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        if self.population_size == 0 {
            return bad("population_size must be positive".into());
        }
        if self.tournament_size == 0 || self.tournament_size > self.population_size {
            return bad(format!(
                "tournament_size {} must lie in [1, population_size]",
                self.tournament_size
            ));
        }
        if !(0.0..1.0).contains(&self.elite_fraction) {
            return bad(format!("elite_fraction {} must lie in [0, 1)", self.elite_fraction));
        }
        if self.elite_count() >= self.population_size {
            return bad(format!(
                "{} elites leave no room for offspring in a population of {}",
                self.elite_count(),
                self.population_size
            ));
        }
        if self.parallel_evaluations == 0 {
            return bad("parallel_evaluations must be positive".into());
        }
        self.operators.validate()?;
        self.budget.validate()?;
        Ok(())
    }

    /// Hash of everything that determines a run's results: this config
    /// (without `parallel_evaluations`), the grammar, the structure and the
    /// evaluator fingerprint.
    pub fn run_hash(&self, g: &Grammar, s: &GaStructure, evaluator: &dyn FitnessEvaluator) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("parallel_evaluations");
        }
        let mut h = Sha256::new();
        for part in [value.to_string(), g.to_string(), s.to_string(), evaluator.fingerprint()] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Picks `k` members uniformly with replacement and returns the fittest;
/// ties among the drawn members are broken uniformly.
pub fn tournament_select<'p, R: Rng + ?Sized>(
    population: &'p [Individual],
    k: usize,
    rng: &mut R,
) -> Result<&'p Individual, EngineError> {
    if population.is_empty() {
        return Err(EngineError::EmptyPopulation);
    }
    let mut best: Vec<&Individual> = Vec::with_capacity(k);
    let mut best_fitness = f64::NEG_INFINITY;
    for _ in 0..k.max(1) {
        let ind = &population[rng.random_range(0..population.len())];
        let f = ind.fitness.ok_or(EngineError::UnevaluatedIndividual(ind.id))?;
        if f > best_fitness {
            best_fitness = f;
            best.clear();
        }
        if f == best_fitness {
            best.push(ind);
        }
    }
    Ok(best[rng.random_range(0..best.len())])
}

fn fitness_of(ind: &Individual) -> f64 {
    ind.fitness.unwrap_or(0.0)
}

/// Highest fitness first, lowest id among equals.
fn rank_order(a: &Individual, b: &Individual) -> std::cmp::Ordering {
    fitness_of(b)
        .total_cmp(&fitness_of(a))
        .then(a.id.cmp(&b.id))
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub generation: usize,
    pub next_id: u64,
    pub population: Vec<Individual>,
    pub stats: Vec<GenerationStats>,
    /// Fittest individual seen so far; earlier wins ties.
    pub best: Individual,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub best_individual: Individual,
    pub best_descriptor: NetworkDescriptor,
    pub stats: Vec<GenerationStats>,
    pub checkpoints: Vec<PathBuf>,
}

pub struct Engine<'a> {
    grammar: &'a Grammar,
    structure: &'a GaStructure,
    config: &'a EvolutionConfig,
    evaluator: &'a dyn FitnessEvaluator,
    registry: OperatorRegistry,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Engine<'a> {
    pub fn new(
        grammar: &'a Grammar,
        structure: &'a GaStructure,
        config: &'a EvolutionConfig,
        evaluator: &'a dyn FitnessEvaluator,
    ) -> Result<Self, EngineError> {
        grammar.validate_structure(structure).map_err(EngineError::Structure)?;
        config.validate()?;
        evaluator.check_budget(&config.budget)?;
        let registry = OperatorRegistry::from_config(&config.operators)?;
        let pool = if config.parallel_evaluations > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.parallel_evaluations)
                    .build()
                    .map_err(|e| EngineError::InvalidConfig(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Engine {
            grammar,
            structure,
            config,
            evaluator,
            registry,
            pool,
        })
    }

    pub fn config(&self) -> &EvolutionConfig {
        self.config
    }

    pub fn run_hash(&self) -> String {
        self.config.run_hash(self.grammar, self.structure, self.evaluator)
    }

    pub fn decode(&self, ind: &Individual) -> Result<NetworkDescriptor, EngineError> {
        Ok(decode_individual(self.grammar, ind)?)
    }

    fn evaluate_one(&self, ind: &mut Individual) {
        let fitness = match decode_individual(self.grammar, ind) {
            Ok(nd) => {
                let budget = EvaluationBudget {
                    eval_seed: derive_seed(
                        self.config.master_seed,
                        Purpose::Evaluation,
                        ind.id,
                        self.config.budget.eval_seed,
                    ),
                    ..self.config.budget.clone()
                };
                let report = self.evaluator.evaluate(&nd, &budget);
                if report.valid && report.fitness.is_finite() {
                    report.fitness
                } else {
                    0.0
                }
            }
            Err(_) => 0.0,
        };
        ind.fitness = Some(fitness);
    }

    /// Evaluates every individual without a fitness.
    fn evaluate(&self, population: &mut [Individual]) {
        let pending = population.iter_mut().filter(|i| i.fitness.is_none());
        match &self.pool {
            None => pending.for_each(|ind| self.evaluate_one(ind)),
            Some(pool) => {
                let mut pending: Vec<&mut Individual> = pending.collect();
                pool.install(|| pending.par_iter_mut().for_each(|ind| self.evaluate_one(ind)));
            }
        }
    }

    fn audit(&self, population: &[Individual]) -> Result<(), EngineError> {
        for ind in population {
            ind.audit(self.grammar, self.structure)?;
        }
        Ok(())
    }

    fn compute_stats(&self, generation: usize, population: &[Individual]) -> Result<GenerationStats, EngineError> {
        let best = population
            .iter()
            .min_by(|a, b| rank_order(a, b))
            .ok_or(EngineError::EmptyPopulation)?;
        let n = population.len() as f64;
        let mean_fitness = population.iter().map(fitness_of).sum::<f64>() / n;
        let mut hidden_total = 0usize;
        for ind in population {
            hidden_total += self.decode(ind)?.hidden_layer_count();
        }
        Ok(GenerationStats {
            generation,
            best_fitness: fitness_of(best),
            mean_fitness,
            best_hidden_layers: self.decode(best)?.hidden_layer_count() as f64,
            mean_hidden_layers: hidden_total as f64 / n,
            best_id: best.id,
        })
    }

    /// Generation 0: a random, evaluated population with ids `0..pop`.
    pub fn initialize(&self) -> Result<EngineState, EngineError> {
        let cfg = self.config;
        let mut population = Vec::with_capacity(cfg.population_size);
        for i in 0..cfg.population_size as u64 {
            let mut rng = stream(cfg.master_seed, Purpose::Init, i, 0);
            let mut ind = random_individual_with_limit(
                self.grammar,
                self.structure,
                &mut rng,
                cfg.operators.depth_limit,
            )?;
            ind.id = i;
            population.push(ind);
        }
        self.evaluate(&mut population);
        let stats = self.compute_stats(0, &population)?;
        let best = population
            .iter()
            .min_by(|a, b| rank_order(a, b))
            .expect("non-empty")
            .clone();
        Ok(EngineState {
            generation: 0,
            next_id: cfg.population_size as u64,
            population,
            stats: vec![stats],
            best,
        })
    }

    /// Produces and evaluates the next generation.
    pub fn step(&self, state: &mut EngineState) -> Result<(), EngineError> {
        let cfg = self.config;
        let generation = state.generation + 1;
        let mut ranked: Vec<&Individual> = state.population.iter().collect();
        ranked.sort_by(|a, b| rank_order(a, b));
        let mut next: Vec<Individual> = ranked[..cfg.elite_count()].iter().map(|i| (*i).clone()).collect();

        let ctx = VariationContext {
            grammar: self.grammar,
            structure: self.structure,
            config: &cfg.operators,
        };
        let mut selection = stream(cfg.master_seed, Purpose::Selection, generation as u64, 0);
        let mut pair = 0u64;
        while next.len() < cfg.population_size {
            let p1 = tournament_select(&state.population, cfg.tournament_size, &mut selection)?;
            let p2 = tournament_select(&state.population, cfg.tournament_size, &mut selection)?;
            let mut rng = stream(cfg.master_seed, Purpose::Variation, generation as u64, pair);
            pair += 1;
            let (o1, o2) = apply_variation(p1, p2, &ctx, &self.registry, &mut rng as &mut dyn RngCore)?;
            for mut child in [o1, o2] {
                if next.len() < cfg.population_size {
                    child.id = state.next_id;
                    state.next_id += 1;
                    next.push(child);
                }
            }
        }
        self.evaluate(&mut next);
        if cfg!(debug_assertions) {
            self.audit(&next)?;
        }
        let stats = self.compute_stats(generation, &next)?;
        let gen_best = next.iter().min_by(|a, b| rank_order(a, b)).expect("non-empty");
        if fitness_of(gen_best) > fitness_of(&state.best) {
            state.best = gen_best.clone();
        }
        state.population = next;
        state.stats.push(stats);
        state.generation = generation;
        Ok(())
    }

    /// Steps until `generations` is reached, calling `observe` after each
    /// completed generation. `observe` returning `false` stops early.
    pub fn run_from(
        &self,
        state: &mut EngineState,
        observe: &mut dyn FnMut(&EngineState) -> Result<bool, EngineError>,
    ) -> Result<(), EngineError> {
        while state.generation < self.config.generations {
            self.step(state)?;
            if !observe(state)? {
                break;
            }
        }
        Ok(())
    }

    pub fn result(&self, state: &EngineState, checkpoints: Vec<PathBuf>) -> Result<RunResult, EngineError> {
        Ok(RunResult {
            best_individual: state.best.clone(),
            best_descriptor: self.decode(&state.best)?,
            stats: state.stats.clone(),
            checkpoints,
        })
    }
}

/// Runs a whole evolution in memory.
pub fn evolve(
    g: &Grammar,
    s: &GaStructure,
    cfg: &EvolutionConfig,
    evaluator: &dyn FitnessEvaluator,
) -> Result<RunResult, EngineError> {
    let engine = Engine::new(g, s, cfg, evaluator)?;
    let mut state = engine.initialize()?;
    engine.run_from(&mut state, &mut |_| Ok(true))?;
    engine.result(&state, Vec::new())
}
