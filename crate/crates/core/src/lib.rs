//! Grammar-driven neuroevolution.
//!
//! Networks are encoded with a two-level genotype: an outer list of modules
//! whose slots hold layers, and per-layer grammar derivations that fix each
//! layer's type and hyper-parameters. The crate covers the grammar parser,
//! the genotype and its decoding, crossover and mutation, shape checking and
//! export of decoded networks, fitness evaluation (including a small dense
//! network trainer) and the generational engine with checkpointing.

pub mod engine;
pub mod evaluator;
pub mod genotype;
pub mod grammar;
pub mod operators;
pub mod phenotype;
pub mod rng;
pub mod stats;
pub mod structure;

pub use genotype::{decode_individual, random_individual, Individual};
pub use grammar::{parse_grammar, Grammar};
pub use phenotype::{render, NetworkDescriptor};
pub use structure::{parse_structure, GaStructure};
