use std::collections::HashMap;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use super::{offspring_of, push_tag, Mutation, OperatorConfig, OperatorError, VariationContext};
use crate::genotype::{random_layer, sample_alternative, sample_value, Individual, Node, RecordId};
use crate::grammar::{Grammar, ParamKind};
use crate::structure::GaStructure;

pub struct AddLayer;
pub struct ReplicateLayer;
pub struct RemoveLayer;
pub struct GrammaticalMutation;
pub struct NumericMutation;

/// Uniform pick among modules satisfying `ok`, or `err` when none does.
fn pick_module(
    ind: &Individual,
    rng: &mut dyn RngCore,
    ok: impl Fn(usize, usize) -> bool,
    err: OperatorError,
) -> Result<usize, OperatorError> {
    let eligible: Vec<usize> = ind
        .modules
        .iter()
        .enumerate()
        .filter(|(i, m)| ok(*i, m.slots.len()))
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Err(err);
    }
    Ok(eligible[rng.random_range(0..eligible.len())])
}

fn bounds(s: &GaStructure, module: usize) -> Result<(usize, usize), OperatorError> {
    s.entries
        .get(module)
        .map(|e| (e.min_layers, e.max_layers))
        .ok_or(OperatorError::NoSuchModule(module))
}

impl Mutation for AddLayer {
    fn name(&self) -> &'static str {
        "add-layer"
    }

    fn mutate(
        &self,
        ind: &Individual,
        ctx: &VariationContext<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<Individual, OperatorError> {
        let s = ctx.structure;
        let module = pick_module(
            ind,
            rng,
            |i, n| bounds(s, i).is_ok_and(|(_, max)| n < max),
            OperatorError::AtMaxLayers(0),
        )?;
        mutate_add_layer(ind, module, ctx.grammar, s, ctx.config.depth_limit, rng)
    }
}

impl Mutation for ReplicateLayer {
    fn name(&self) -> &'static str {
        "replicate-layer"
    }

    fn mutate(
        &self,
        ind: &Individual,
        ctx: &VariationContext<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<Individual, OperatorError> {
        let s = ctx.structure;
        let module = pick_module(
            ind,
            rng,
            |i, n| n > 0 && bounds(s, i).is_ok_and(|(_, max)| n < max),
            OperatorError::AtMaxLayers(0),
        )?;
        mutate_replicate_layer(ind, module, s, rng)
    }
}

impl Mutation for RemoveLayer {
    fn name(&self) -> &'static str {
        "remove-layer"
    }

    fn mutate(
        &self,
        ind: &Individual,
        ctx: &VariationContext<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<Individual, OperatorError> {
        let s = ctx.structure;
        let module = pick_module(
            ind,
            rng,
            |i, n| bounds(s, i).is_ok_and(|(min, _)| n > min),
            OperatorError::AtMinLayers(0),
        )?;
        mutate_remove_layer(ind, module, s, rng)
    }
}

impl Mutation for GrammaticalMutation {
    fn name(&self) -> &'static str {
        "grammatical"
    }

    fn mutate(
        &self,
        ind: &Individual,
        ctx: &VariationContext<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<Individual, OperatorError> {
        mutate_grammatical(ind, ctx.grammar, ctx.config.depth_limit, rng)
    }
}

impl Mutation for NumericMutation {
    fn name(&self) -> &'static str {
        "numeric"
    }

    fn mutate(
        &self,
        ind: &Individual,
        ctx: &VariationContext<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<Individual, OperatorError> {
        mutate_numeric(ind, ctx.grammar, ctx.config, rng)
    }
}

/// Inserts a freshly sampled layer at a uniform position of `module`.
pub fn mutate_add_layer<R: Rng + ?Sized>(
    ind: &Individual,
    module: usize,
    g: &Grammar,
    s: &GaStructure,
    depth_limit: usize,
    rng: &mut R,
) -> Result<Individual, OperatorError> {
    let (_, max) = bounds(s, module)?;
    let len = ind
        .modules
        .get(module)
        .ok_or(OperatorError::NoSuchModule(module))?
        .slots
        .len();
    if len >= max {
        return Err(OperatorError::AtMaxLayers(module));
    }
    let record = random_layer(g, &s.entries[module].nonterminal, rng, depth_limit)?;
    let pos = rng.random_range(0..=len);
    let mut child = offspring_of(ind, &[ind]);
    let m = &mut child.modules[module];
    let id = m.add_record(record);
    m.slots.insert(pos, id);
    push_tag(&mut child, format!("add-layer:module={module}:pos={pos}"));
    Ok(child)
}

/// Inserts another reference to an existing record at a uniform position,
/// so later changes to that record show up in both slots.
pub fn mutate_replicate_layer<R: Rng + ?Sized>(
    ind: &Individual,
    module: usize,
    s: &GaStructure,
    rng: &mut R,
) -> Result<Individual, OperatorError> {
    let (_, max) = bounds(s, module)?;
    let slots = &ind
        .modules
        .get(module)
        .ok_or(OperatorError::NoSuchModule(module))?
        .slots;
    if slots.len() >= max {
        return Err(OperatorError::AtMaxLayers(module));
    }
    if slots.is_empty() {
        return Err(OperatorError::NoEligibleSite);
    }
    let source = rng.random_range(0..slots.len());
    let pos = rng.random_range(0..=slots.len());
    let mut child = offspring_of(ind, &[ind]);
    let m = &mut child.modules[module];
    let id = m.slots[source];
    m.slots.insert(pos, id);
    push_tag(
        &mut child,
        format!("replicate-layer:module={module}:from={source}:pos={pos}"),
    );
    Ok(child)
}

/// Removes a uniformly chosen slot; its record goes once nothing refers to it.
pub fn mutate_remove_layer<R: Rng + ?Sized>(
    ind: &Individual,
    module: usize,
    s: &GaStructure,
    rng: &mut R,
) -> Result<Individual, OperatorError> {
    let (min, _) = bounds(s, module)?;
    let len = ind
        .modules
        .get(module)
        .ok_or(OperatorError::NoSuchModule(module))?
        .slots
        .len();
    if len <= min || len == 0 {
        return Err(OperatorError::AtMinLayers(module));
    }
    let slot = rng.random_range(0..len);
    let mut child = offspring_of(ind, &[ind]);
    let m = &mut child.modules[module];
    let id = m.slots.remove(slot);
    if m.ref_count(id) == 0 {
        m.records.remove(&id);
    }
    push_tag(&mut child, format!("remove-layer:module={module}:slot={slot}"));
    Ok(child)
}

/// One expansion site with at least two alternatives.
struct Site {
    module: usize,
    record: RecordId,
    /// Position among the record's eligible sites in derivation order.
    ordinal: usize,
    nt: String,
    occurrence: usize,
}

fn expansion_sites(ind: &Individual, g: &Grammar) -> Result<Vec<Site>, OperatorError> {
    let mut sites = Vec::new();
    for (mi, module) in ind.modules.iter().enumerate() {
        for rid in module.distinct_records() {
            let mut tree = module.records[&rid].replay(g)?;
            let mut seen: HashMap<String, usize> = HashMap::new();
            let mut ordinal = 0;
            tree.visit_mut(0, &mut |node, _| {
                if let Node::Expand { nt, .. } = node {
                    let occurrence = seen.entry(nt.to_string()).or_insert(0);
                    if g.alternatives_count(nt).unwrap_or(0) >= 2 {
                        sites.push(Site {
                            module: mi,
                            record: rid,
                            ordinal,
                            nt: nt.to_string(),
                            occurrence: *occurrence,
                        });
                        ordinal += 1;
                    }
                    *occurrence += 1;
                }
                true
            });
        }
    }
    Ok(sites)
}

/// Replaces one expansion choice by a different alternative and resamples
/// the derivation beneath it. Sites are drawn uniformly over the distinct
/// records of the individual.
pub fn mutate_grammatical<R: Rng + ?Sized>(
    ind: &Individual,
    g: &Grammar,
    depth_limit: usize,
    rng: &mut R,
) -> Result<Individual, OperatorError> {
    let sites = expansion_sites(ind, g)?;
    if sites.is_empty() {
        return Err(OperatorError::NoEligibleSite);
    }
    let site = &sites[rng.random_range(0..sites.len())];
    let mut child = offspring_of(ind, &[ind]);
    let module = &mut child.modules[site.module];
    let record = &module.records[&site.record];
    let root = record.start.clone();
    let mut tree = record.replay(g)?;

    let mut ordinal = 0;
    let mut outcome: Option<Result<(usize, usize), OperatorError>> = None;
    tree.visit_mut(0, &mut |node, depth| {
        if outcome.is_some() {
            return false;
        }
        let (nt, old) = match node {
            Node::Expand { nt, alt, .. } => (*nt, *alt),
            _ => return true,
        };
        let count = g.alternatives_count(nt).unwrap_or(0);
        if count < 2 {
            return true;
        }
        if ordinal != site.ordinal {
            ordinal += 1;
            return true;
        }
        let mut new = rng.random_range(0..count - 1);
        if new >= old {
            new += 1;
        }
        outcome = Some(
            sample_alternative(g, nt, new, rng, depth, depth_limit, &root)
                .map(|fresh| {
                    *node = fresh;
                    (old, new)
                })
                .map_err(OperatorError::from),
        );
        false
    });
    let (old, new) = outcome.expect("site exists")?;
    module.records.insert(site.record, tree.to_record());
    push_tag(
        &mut child,
        format!(
            "grammatical:module={}:record={}:site={}#{}:{}->{}",
            site.module, site.record, site.nt, site.occurrence, old, new
        ),
    );
    Ok(child)
}

/// Changes one parameter value, drawn uniformly over all values of the
/// individual's distinct records. Integers are redrawn uniformly over the
/// block's range; floats get Gaussian noise with standard deviation
/// `gaussian_sigma_fraction * (max - min)`, clamped to the range.
pub fn mutate_numeric<R: Rng + ?Sized>(
    ind: &Individual,
    g: &Grammar,
    cfg: &OperatorConfig,
    rng: &mut R,
) -> Result<Individual, OperatorError> {
    let mut sites: Vec<(usize, RecordId, usize, usize)> = Vec::new();
    for (mi, module) in ind.modules.iter().enumerate() {
        for rid in module.distinct_records() {
            for (pi, p) in module.records[&rid].params.iter().enumerate() {
                sites.extend((0..p.values.len()).map(|vi| (mi, rid, pi, vi)));
            }
        }
    }
    if sites.is_empty() {
        return Err(OperatorError::NoEligibleSite);
    }
    let (mi, rid, pi, vi) = sites[rng.random_range(0..sites.len())];
    let mut child = offspring_of(ind, &[ind]);
    let record = child.modules[mi].records.get_mut(&rid).expect("site record");

    let mut tree = record.replay(g)?;
    let mut block = None;
    let mut seen = 0;
    tree.visit_mut(0, &mut |node, _| {
        if let Node::Param { block: b, .. } = node {
            if seen == pi {
                block = Some(*b);
            }
            seen += 1;
        }
        block.is_none()
    });
    let block = block.expect("replayed record has the parameter");
    let old = record.params[pi].values[vi];
    let new = match block.kind {
        ParamKind::Int => sample_value(block, rng),
        ParamKind::Float => {
            let sigma = cfg.gaussian_sigma_fraction * (block.max - block.min);
            let noise = if sigma > 0.0 {
                Normal::new(0.0, sigma)
                    .map_err(|e| OperatorError::InvalidConfig(e.to_string()))?
                    .sample(rng)
            } else {
                0.0
            };
            (old + noise).clamp(block.min, block.max)
        }
    };
    record.params[pi].values[vi] = new;
    let name = record.params[pi].name.clone();
    push_tag(
        &mut child,
        format!("numeric:module={mi}:record={rid}:param={name}#{pi}[{vi}]"),
    );
    Ok(child)
}
