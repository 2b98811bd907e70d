use std::collections::HashMap;

use rand::{Rng, RngCore};

use super::{check_compatible, offspring_of, push_tag, Crossover, OperatorError};
use crate::genotype::{Individual, ModuleGenotype, RecordId};

/// Exchanges the tails of one module between the parents.
pub struct OnePoint;

/// Exchanges whole modules according to a random bit mask.
pub struct Bitmask;

impl Crossover for OnePoint {
    fn name(&self) -> &'static str {
        "one-point"
    }

    fn cross(
        &self,
        p1: &Individual,
        p2: &Individual,
        rng: &mut dyn RngCore,
    ) -> Result<(Individual, Individual), OperatorError> {
        one_point_crossover(p1, p2, rng)
    }
}

impl Crossover for Bitmask {
    fn name(&self) -> &'static str {
        "bitmask"
    }

    fn cross(
        &self,
        p1: &Individual,
        p2: &Individual,
        rng: &mut dyn RngCore,
    ) -> Result<(Individual, Individual), OperatorError> {
        bitmask_crossover(p1, p2, rng)
    }
}

/// Picks a module uniformly and a cut in `[1, L-1]`, `L` being the smaller of
/// the two parents' slot counts there. With `L < 2` the offspring are plain
/// copies.
pub fn one_point_crossover<R: Rng + ?Sized>(
    p1: &Individual,
    p2: &Individual,
    rng: &mut R,
) -> Result<(Individual, Individual), OperatorError> {
    check_compatible(p1, p2)?;
    if p1.modules.is_empty() {
        return Err(OperatorError::StructureMismatch);
    }
    let module = rng.random_range(0..p1.modules.len());
    let shortest = p1.modules[module].slots.len().min(p2.modules[module].slots.len());
    if shortest < 2 {
        let mut o1 = offspring_of(p1, &[p1, p2]);
        let mut o2 = offspring_of(p2, &[p1, p2]);
        let tag = format!("one-point:module={module}:copy");
        push_tag(&mut o1, tag.clone());
        push_tag(&mut o2, tag);
        return Ok((o1, o2));
    }
    let cut = rng.random_range(1..shortest);
    one_point_at(p1, p2, module, cut)
}

/// One-point crossover at a fixed module and cut: offspring 1 keeps
/// `p1`'s slots before `cut` and takes `p2`'s from `cut` on; offspring 2 the
/// reverse.
pub fn one_point_at(
    p1: &Individual,
    p2: &Individual,
    module: usize,
    cut: usize,
) -> Result<(Individual, Individual), OperatorError> {
    check_compatible(p1, p2)?;
    let (m1, m2) = match (p1.modules.get(module), p2.modules.get(module)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(OperatorError::NoSuchModule(module)),
    };
    let cut = cut.min(m1.slots.len()).min(m2.slots.len());
    let mut o1 = offspring_of(p1, &[p1, p2]);
    let mut o2 = offspring_of(p2, &[p1, p2]);
    o1.modules[module] = splice(m1, m2, cut);
    o2.modules[module] = splice(m2, m1, cut);
    let tag = format!("one-point:module={module}:cut={cut}");
    push_tag(&mut o1, tag.clone());
    push_tag(&mut o2, tag);
    Ok((o1, o2))
}

/// `head`'s slots before `cut` followed by `tail`'s slots from `cut` on.
/// Records are copied into a fresh table; slots that shared a record in
/// their source module still share one.
fn splice(head: &ModuleGenotype, tail: &ModuleGenotype, cut: usize) -> ModuleGenotype {
    let mut out = ModuleGenotype::new(head.structure_index);
    for (source, range) in [(head, 0..cut), (tail, cut..tail.slots.len())] {
        let mut remap: HashMap<RecordId, RecordId> = HashMap::new();
        for &old in &source.slots[range] {
            let id = *remap
                .entry(old)
                .or_insert_with(|| out.add_record(source.records[&old].clone()));
            out.slots.push(id);
        }
    }
    out
}

pub fn bitmask_crossover<R: Rng + ?Sized>(
    p1: &Individual,
    p2: &Individual,
    rng: &mut R,
) -> Result<(Individual, Individual), OperatorError> {
    let mask: Vec<bool> = (0..p1.modules.len()).map(|_| rng.random_bool(0.5)).collect();
    bitmask_with(p1, p2, &mask)
}

/// Offspring 1 takes module `i` from `p1` where `mask[i]` is set and from
/// `p2` otherwise; offspring 2 takes the complement.
pub fn bitmask_with(
    p1: &Individual,
    p2: &Individual,
    mask: &[bool],
) -> Result<(Individual, Individual), OperatorError> {
    check_compatible(p1, p2)?;
    if mask.len() != p1.modules.len() {
        return Err(OperatorError::StructureMismatch);
    }
    let mut o1 = offspring_of(p1, &[p1, p2]);
    let mut o2 = offspring_of(p2, &[p1, p2]);
    for (i, &bit) in mask.iter().enumerate() {
        let (a, b) = if bit { (p1, p2) } else { (p2, p1) };
        o1.modules[i] = a.modules[i].clone();
        o2.modules[i] = b.modules[i].clone();
    }
    let bits: String = mask.iter().map(|&b| if b { '1' } else { '0' }).collect();
    let tag = format!("bitmask:mask={bits}");
    push_tag(&mut o1, tag.clone());
    push_tag(&mut o2, tag);
    Ok((o1, o2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::{decode_individual, random_individual, LayerRecord};
    use crate::grammar::{parse_grammar, Grammar};
    use crate::phenotype::render;
    use crate::structure::parse_structure;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn bits_grammar() -> Grammar {
        parse_grammar("<bit> ::= b:0 | b:1").unwrap()
    }

    fn bit_individual(id: u64, bits: &str) -> Individual {
        let mut m = ModuleGenotype::new(0);
        for c in bits.chars() {
            let alt = usize::from(c == '1');
            let rec = LayerRecord {
                start: "bit".into(),
                choices: BTreeMap::from([("bit".to_string(), vec![alt])]),
                params: vec![],
            };
            let rid = m.add_record(rec);
            m.slots.push(rid);
        }
        Individual {
            id,
            modules: vec![m],
            fitness: Some(1.0),
            lineage: None,
        }
    }

    fn as_bits(g: &Grammar, ind: &Individual) -> String {
        decode_individual(g, ind)
            .unwrap()
            .layers
            .iter()
            .map(|l| l.get("b").unwrap().to_string())
            .collect()
    }

    #[test]
    fn bitstring_example() {
        let g = bits_grammar();
        let p1 = bit_individual(1, "111000");
        let p2 = bit_individual(2, "101010");
        let (o1, o2) = one_point_at(&p1, &p2, 0, 3).unwrap();
        assert_eq!(as_bits(&g, &o1), "111010");
        assert_eq!(as_bits(&g, &o2), "101000");
        assert_eq!(o1.fitness, None);
        let lineage = o1.lineage.unwrap();
        assert_eq!(lineage.parents, [1, 2]);
        assert_eq!(lineage.operators, ["one-point:module=0:cut=3"]);
        assert_eq!(as_bits(&g, &p1), "111000");
    }

    #[test]
    fn unequal_sizes_swap_lengths() {
        let p1 = bit_individual(1, "1111");
        let p2 = bit_individual(2, "0000000");
        let (o1, o2) = one_point_at(&p1, &p2, 0, 2).unwrap();
        assert_eq!(o1.modules[0].slots.len(), 7);
        assert_eq!(o2.modules[0].slots.len(), 4);
    }

    #[test]
    fn sharing_survives_exchange() {
        let mut p2 = bit_individual(2, "0101");
        p2.modules[0].slots = vec![0, 1, 3, 3];
        p2.modules[0].prune();
        let p1 = bit_individual(1, "1111");
        let (o1, _) = one_point_at(&p1, &p2, 0, 2).unwrap();
        let m = &o1.modules[0];
        assert_eq!(m.slots[2], m.slots[3]);
        assert_eq!(m.ref_count(m.slots[2]), 2);
        assert_eq!(m.records.len(), 3);
    }

    #[test]
    fn random_cut_within_smaller_module() {
        let g = bits_grammar();
        let p1 = bit_individual(1, "11");
        let p2 = bit_individual(2, "000000");
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let (o1, o2) = one_point_crossover(&p1, &p2, &mut rng).unwrap();
            assert_eq!(as_bits(&g, &o1), "100000");
            assert_eq!(as_bits(&g, &o2), "01");
        }
        let single = bit_individual(3, "1");
        let (o1, o2) = one_point_crossover(&single, &p2, &mut rng).unwrap();
        assert_eq!(as_bits(&g, &o1), "1");
        assert_eq!(as_bits(&g, &o2), "000000");
    }

    #[test]
    fn identical_parents() {
        let g = parse_grammar(include_str!("../../fixtures/cnn.grammar")).unwrap();
        let s = parse_structure(include_str!("../../fixtures/cnn.structure")).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_individual(&g, &s, &mut rng).unwrap();
        let expected = render(&decode_individual(&g, &p).unwrap());
        for _ in 0..20 {
            let (a, b) = one_point_crossover(&p, &p, &mut rng).unwrap();
            assert_eq!(render(&decode_individual(&g, &a).unwrap()), expected);
            assert_eq!(render(&decode_individual(&g, &b).unwrap()), expected);
            let (a, b) = bitmask_crossover(&p, &p, &mut rng).unwrap();
            assert_eq!(render(&decode_individual(&g, &a).unwrap()), expected);
            assert_eq!(render(&decode_individual(&g, &b).unwrap()), expected);
        }
    }

    #[test]
    fn structure_mismatch() {
        let p1 = bit_individual(1, "11");
        let mut p2 = bit_individual(2, "11");
        p2.modules.push(ModuleGenotype::new(1));
        assert_eq!(
            one_point_at(&p1, &p2, 0, 1).unwrap_err(),
            OperatorError::StructureMismatch
        );
        assert_eq!(
            bitmask_with(&p1, &p2, &[true]).unwrap_err(),
            OperatorError::StructureMismatch
        );
    }
}
