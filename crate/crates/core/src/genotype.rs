//! Two-level genotype.
//!
//! The outer level is a list of modules, one per GA-structure entry, each an
//! ordered list of layer slots. A slot points at a [`LayerRecord`] in its
//! module's record table; two slots may point at the same record, in which
//! case they always decode to the same layer.
//!
//! A record is a DSGE derivation: for each non-terminal, the list of
//! alternative indices chosen each time it is expanded, plus the numeric
//! values drawn for every parameter block, both in depth-first left-to-right
//! derivation order. Replaying a record must consume all of it.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Grammar, ParamBlock, ParamKind, Symbol};
use crate::phenotype::{route_layer, Attrs, NetworkDescriptor};
use crate::structure::GaStructure;

pub const DEFAULT_DEPTH_LIMIT: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenotypeError {
    #[error("derivation from <{start}> exceeds depth limit {limit}")]
    DepthExceeded { start: String, limit: usize },
    #[error("unknown non-terminal <{0}>")]
    UnknownNonTerminal(String),
    #[error("invalid genotype: {0}")]
    InvalidGenotype(String),
}

fn invalid(msg: impl Into<String>) -> GenotypeError {
    GenotypeError::InvalidGenotype(msg.into())
}

pub type RecordId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamValues {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub start: String,
    pub choices: BTreeMap<String, Vec<usize>>,
    pub params: Vec<ParamValues>,
}

/// Derivation tree of one record, borrowed from the grammar.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node<'g> {
    Expand {
        nt: &'g str,
        alt: usize,
        children: Vec<Node<'g>>,
    },
    Attr {
        key: &'g str,
        value: &'g str,
    },
    Param {
        block: &'g ParamBlock,
        values: Vec<f64>,
    },
}

impl<'g> Node<'g> {
    /// Flattens the tree back into per-non-terminal choice lists.
    pub(crate) fn to_record(&self) -> LayerRecord {
        let Node::Expand { nt, .. } = self else {
            panic!("record roots are expansions");
        };
        let mut record = LayerRecord {
            start: nt.to_string(),
            choices: BTreeMap::new(),
            params: Vec::new(),
        };
        self.flatten_into(&mut record);
        record
    }

    fn flatten_into(&self, record: &mut LayerRecord) {
        match self {
            Node::Expand { nt, alt, children } => {
                record.choices.entry(nt.to_string()).or_default().push(*alt);
                for child in children {
                    child.flatten_into(record);
                }
            }
            Node::Attr { .. } => {}
            Node::Param { block, values } => record.params.push(ParamValues {
                name: block.name.clone(),
                values: values.clone(),
            }),
        }
    }

    fn collect_attrs(&self, out: &mut Attrs) {
        match self {
            Node::Expand { children, .. } => children.iter().for_each(|c| c.collect_attrs(out)),
            Node::Attr { key, value } => out.push((key.to_string(), value.to_string())),
            Node::Param { block, values } => {
                let joined = values
                    .iter()
                    .map(|v| block.format_value(*v))
                    .collect::<Vec<_>>()
                    .join(",");
                out.push((block.name.clone(), joined));
            }
        }
    }

    /// Visits nodes in derivation order, passing each node's nesting depth.
    pub(crate) fn visit_mut(&mut self, depth: usize, f: &mut impl FnMut(&mut Node<'g>, usize) -> bool) {
        if !f(self, depth) {
            return;
        }
        if let Node::Expand { children, .. } = self {
            for child in children {
                child.visit_mut(depth + 1, f);
            }
        }
    }
}

/// Samples a fresh derivation of `nt`: uniform alternatives, uniform
/// parameter values (integers inclusive, floats continuous).
pub(crate) fn sample_tree<'g, R: Rng + ?Sized>(
    g: &'g Grammar,
    nt: &str,
    rng: &mut R,
    depth: usize,
    limit: usize,
    root: &str,
) -> Result<Node<'g>, GenotypeError> {
    if depth > limit {
        return Err(GenotypeError::DepthExceeded {
            start: root.to_string(),
            limit,
        });
    }
    let production = g
        .production(nt)
        .ok_or_else(|| GenotypeError::UnknownNonTerminal(nt.to_string()))?;
    let alt = rng.random_range(0..production.alternatives.len());
    sample_alternative(g, production.lhs.as_str(), alt, rng, depth, limit, root)
}

pub(crate) fn sample_alternative<'g, R: Rng + ?Sized>(
    g: &'g Grammar,
    nt: &str,
    alt: usize,
    rng: &mut R,
    depth: usize,
    limit: usize,
    root: &str,
) -> Result<Node<'g>, GenotypeError> {
    let production = g
        .production(nt)
        .ok_or_else(|| GenotypeError::UnknownNonTerminal(nt.to_string()))?;
    let mut children = Vec::with_capacity(production.alternatives[alt].len());
    for sym in &production.alternatives[alt] {
        children.push(match sym {
            Symbol::NonTerminal(child) => sample_tree(g, child, rng, depth + 1, limit, root)?,
            Symbol::TerminalAttr { key, value } => Node::Attr { key, value },
            Symbol::Param(block) => Node::Param {
                block,
                values: (0..block.count).map(|_| sample_value(block, rng)).collect(),
            },
        });
    }
    Ok(Node::Expand {
        nt: production.lhs.as_str(),
        alt,
        children,
    })
}

pub(crate) fn sample_value<R: Rng + ?Sized>(block: &ParamBlock, rng: &mut R) -> f64 {
    match block.kind {
        ParamKind::Int => rng.random_range(block.min as i64..=block.max as i64) as f64,
        ParamKind::Float if block.min == block.max => block.min,
        ParamKind::Float => rng.random_range(block.min..=block.max),
    }
}

struct Replay<'r> {
    record: &'r LayerRecord,
    cursors: HashMap<&'r str, usize>,
    next_param: usize,
}

impl<'r> Replay<'r> {
    fn expand<'g>(&mut self, g: &'g Grammar, nt: &str) -> Result<Node<'g>, GenotypeError> {
        let production = g
            .production(nt)
            .ok_or_else(|| GenotypeError::UnknownNonTerminal(nt.to_string()))?;
        let (key, list) = self
            .record
            .choices
            .get_key_value(nt)
            .ok_or_else(|| invalid(format!("no choices stored for <{nt}>")))?;
        let cursor = self.cursors.entry(key.as_str()).or_insert(0);
        let alt = *list
            .get(*cursor)
            .ok_or_else(|| invalid(format!("ran out of choices for <{nt}>")))?;
        *cursor += 1;
        if alt >= production.alternatives.len() {
            return Err(invalid(format!(
                "choice {alt} for <{nt}> is out of range (0..{})",
                production.alternatives.len()
            )));
        }
        let mut children = Vec::with_capacity(production.alternatives[alt].len());
        for sym in &production.alternatives[alt] {
            children.push(match sym {
                Symbol::NonTerminal(child) => self.expand(g, child)?,
                Symbol::TerminalAttr { key, value } => Node::Attr { key, value },
                Symbol::Param(block) => {
                    let entry = self
                        .record
                        .params
                        .get(self.next_param)
                        .ok_or_else(|| invalid(format!("ran out of values for `{}`", block.name)))?;
                    self.next_param += 1;
                    if entry.name != block.name {
                        return Err(invalid(format!(
                            "expected values for `{}`, found `{}`",
                            block.name, entry.name
                        )));
                    }
                    if entry.values.len() != block.count {
                        return Err(invalid(format!(
                            "`{}` needs {} values, found {}",
                            block.name,
                            block.count,
                            entry.values.len()
                        )));
                    }
                    if let Some(bad) = entry.values.iter().find(|v| !block.contains(**v)) {
                        return Err(invalid(format!("`{}` value {bad} is out of range", block.name)));
                    }
                    Node::Param {
                        block,
                        values: entry.values.clone(),
                    }
                }
            });
        }
        Ok(Node::Expand {
            nt: production.lhs.as_str(),
            alt,
            children,
        })
    }
}

impl LayerRecord {
    /// Replays the record against `g`, checking that every stored choice and
    /// value is consumed exactly once.
    pub(crate) fn replay<'g>(&self, g: &'g Grammar) -> Result<Node<'g>, GenotypeError> {
        let mut replay = Replay {
            record: self,
            cursors: HashMap::new(),
            next_param: 0,
        };
        let tree = replay.expand(g, &self.start)?;
        for (nt, list) in &self.choices {
            let used = replay.cursors.get(nt.as_str()).copied().unwrap_or(0);
            if used != list.len() {
                return Err(invalid(format!(
                    "{} unused choices for <{nt}>",
                    list.len() - used
                )));
            }
        }
        if replay.next_param != self.params.len() {
            return Err(invalid(format!(
                "{} unused parameter entries",
                self.params.len() - replay.next_param
            )));
        }
        Ok(tree)
    }

    pub fn validate(&self, g: &Grammar) -> Result<(), GenotypeError> {
        self.replay(g).map(|_| ())
    }

    /// Total number of stored parameter values.
    pub fn value_count(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }
}

/// Draws a random derivation of `start`.
pub fn random_layer<R: Rng + ?Sized>(
    g: &Grammar,
    start: &str,
    rng: &mut R,
    depth_limit: usize,
) -> Result<LayerRecord, GenotypeError> {
    Ok(sample_tree(g, start, rng, 0, depth_limit, start)?.to_record())
}

/// Decodes one record into its `(key, value)` pairs in derivation order.
pub fn decode_layer(g: &Grammar, record: &LayerRecord) -> Result<Attrs, GenotypeError> {
    let tree = record.replay(g)?;
    let mut attrs = Vec::new();
    tree.collect_attrs(&mut attrs);
    Ok(attrs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleGenotype {
    pub structure_index: usize,
    pub slots: Vec<RecordId>,
    pub records: BTreeMap<RecordId, LayerRecord>,
}

impl ModuleGenotype {
    pub fn new(structure_index: usize) -> Self {
        ModuleGenotype {
            structure_index,
            slots: Vec::new(),
            records: BTreeMap::new(),
        }
    }

    /// Number of slots referring to `id`.
    pub fn ref_count(&self, id: RecordId) -> usize {
        self.slots.iter().filter(|&&s| s == id).count()
    }

    pub fn record_at(&self, slot: usize) -> Option<&LayerRecord> {
        self.slots.get(slot).and_then(|id| self.records.get(id))
    }

    pub fn next_record_id(&self) -> RecordId {
        self.records.keys().next_back().map_or(0, |k| k + 1)
    }

    /// Adds a record to the table without referencing it from a slot.
    pub fn add_record(&mut self, record: LayerRecord) -> RecordId {
        let id = self.next_record_id();
        self.records.insert(id, record);
        id
    }

    /// Record ids in the order of their first referring slot.
    pub fn distinct_records(&self) -> Vec<RecordId> {
        let mut seen = Vec::new();
        for &id in &self.slots {
            if !seen.contains(&id) {
                seen.push(id);
            }
        }
        seen
    }

    /// Drops records no slot refers to.
    pub fn prune(&mut self) {
        let live = self.distinct_records();
        self.records.retain(|id, _| live.contains(id));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Lineage {
    pub parents: Vec<u64>,
    pub operators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    pub modules: Vec<ModuleGenotype>,
    pub fitness: Option<f64>,
    #[serde(default)]
    pub lineage: Option<Lineage>,
}

impl Individual {
    /// A value copy. Records are owned by their module, so the copy shares
    /// nothing with `self` while keeping which of its slots share a record.
    pub fn deep_copy(&self) -> Individual {
        self.clone()
    }

    pub fn layer_count(&self) -> usize {
        self.modules.iter().map(|m| m.slots.len()).sum()
    }

    /// Checks every genotype invariant against the grammar and structure:
    /// module count and order, slot bounds, slot resolution, no orphan
    /// records, start symbols, and clean replay of each record.
    pub fn audit(&self, g: &Grammar, s: &GaStructure) -> Result<(), GenotypeError> {
        if self.modules.len() != s.entries.len() {
            return Err(invalid(format!(
                "{} modules for a structure of {}",
                self.modules.len(),
                s.entries.len()
            )));
        }
        for (i, (module, entry)) in self.modules.iter().zip(&s.entries).enumerate() {
            if module.structure_index != i {
                return Err(invalid(format!("module {i} has structure index {}", module.structure_index)));
            }
            let n = module.slots.len();
            if n < entry.min_layers || n > entry.max_layers {
                return Err(invalid(format!(
                    "module {i} has {n} slots outside [{}, {}]",
                    entry.min_layers, entry.max_layers
                )));
            }
            for id in &module.slots {
                if !module.records.contains_key(id) {
                    return Err(invalid(format!("module {i}: slot refers to missing record {id}")));
                }
            }
            for (id, record) in &module.records {
                if module.ref_count(*id) == 0 {
                    return Err(invalid(format!("module {i}: record {id} is orphaned")));
                }
                if record.start != entry.nonterminal {
                    return Err(invalid(format!(
                        "module {i}: record {id} starts at <{}> instead of <{}>",
                        record.start, entry.nonterminal
                    )));
                }
                record.validate(g)?;
            }
        }
        Ok(())
    }
}

/// Samples an individual: per module a uniform slot count within bounds,
/// each slot a fresh record.
pub fn random_individual<R: Rng + ?Sized>(
    g: &Grammar,
    s: &GaStructure,
    rng: &mut R,
) -> Result<Individual, GenotypeError> {
    random_individual_with_limit(g, s, rng, DEFAULT_DEPTH_LIMIT)
}

pub fn random_individual_with_limit<R: Rng + ?Sized>(
    g: &Grammar,
    s: &GaStructure,
    rng: &mut R,
    depth_limit: usize,
) -> Result<Individual, GenotypeError> {
    let mut modules = Vec::with_capacity(s.entries.len());
    for (i, entry) in s.entries.iter().enumerate() {
        let mut module = ModuleGenotype::new(i);
        let count = rng.random_range(entry.min_layers..=entry.max_layers);
        for _ in 0..count {
            let record = random_layer(g, &entry.nonterminal, rng, depth_limit)?;
            let id = module.add_record(record);
            module.slots.push(id);
        }
        modules.push(module);
    }
    Ok(Individual {
        id: 0,
        modules,
        fitness: None,
        lineage: None,
    })
}

/// Decodes every slot in module order then slot order. Layers whose first
/// key is `learning` (or `augmentation`) are routed to that section of the
/// descriptor.
pub fn decode_individual(g: &Grammar, ind: &Individual) -> Result<NetworkDescriptor, GenotypeError> {
    let mut nd = NetworkDescriptor::default();
    for module in &ind.modules {
        let mut cache: HashMap<RecordId, Attrs> = HashMap::new();
        for id in &module.slots {
            let attrs = match cache.get(id) {
                Some(a) => a.clone(),
                None => {
                    let record = module
                        .records
                        .get(id)
                        .ok_or_else(|| invalid(format!("slot refers to missing record {id}")))?;
                    let a = decode_layer(g, record)?;
                    cache.insert(*id, a.clone());
                    a
                }
            };
            route_layer(&mut nd, attrs).map_err(|e| invalid(e.to_string()))?;
        }
    }
    Ok(nd)
}
