//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints one `PASS`/`FAIL` line, with its timing, on every run.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use neurogram::engine::{evolve, run_in_directory, Engine, EvolutionConfig, RunDirectory};
use neurogram::evaluator::{
    ensemble_predict, make_toy_dataset, test_accuracy, train_model, Activation, DenseEvaluator,
    EvaluationBudget, Gradients, Mlp, SurrogateEvaluator, SurrogateTarget, ToyKind,
};
use neurogram::genotype::{decode_layer, Individual, LayerRecord, ModuleGenotype};
use neurogram::grammar::{ParamBlock, Symbol};
use neurogram::operators::{
    apply_variation, bitmask_with, is_crossover_tag, is_mutation_tag, mutate_grammatical,
    mutate_numeric, mutate_replicate_layer, one_point_at, OperatorConfig, OperatorError, OperatorRegistry, VariationContext,
};
use neurogram::rng::{derive_seed, Purpose};
use neurogram::stats::{pearson, write_stats_rows};
use neurogram::{decode_individual, parse_grammar, parse_structure, random_individual, GaStructure, Grammar};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CNN_GRAMMAR: &str = include_str!("../fixtures/cnn.grammar");
const CNN_STRUCTURE: &str = include_str!("../fixtures/cnn.structure");
const DENSE_GRAMMAR: &str = include_str!("../fixtures/dense.grammar");
const DENSE_STRUCTURE: &str = include_str!("../fixtures/dense.structure");

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn cnn() -> (Grammar, GaStructure) {
    (parse_grammar(CNN_GRAMMAR).unwrap(), parse_structure(CNN_STRUCTURE).unwrap())
}

fn grammar_fixture() -> Outcome {
    let start = Instant::now();
    let g = parse_grammar(CNN_GRAMMAR).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let expected = [
        ("features", 2),
        ("convolution", 1),
        ("batch-normalisation", 2),
        ("merge-input", 2),
        ("pooling", 1),
        ("pool-type", 2),
        ("padding", 2),
        ("classification", 1),
        ("fully-connected", 1),
        ("activation", 3),
        ("bias", 2),
        ("softmax", 1),
        ("learning", 1),
    ];
    check(g.len() == 13, format!("{} non-terminals", g.len()))?;
    for (nt, n) in expected {
        let got = g.alternatives_count(nt).map_err(|e| e.to_string())?;
        check(got == n, format!("<{nt}> has {got} alternatives, expected {n}"))?;
    }
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("13 non-terminals, parse {elapsed:.2?}"))
}

fn param_blocks(g: &Grammar) -> HashMap<String, ParamBlock> {
    let mut out = HashMap::new();
    for p in g.productions() {
        for alt in &p.alternatives {
            for sym in alt {
                if let Symbol::Param(b) = sym {
                    out.entry(b.name.clone()).or_insert_with(|| b.clone());
                }
            }
        }
    }
    out
}

fn representation_fuzz() -> Outcome {
    let (g, s) = cnn();
    let blocks = param_blocks(&g);
    let bounds = [(1, 30), (1, 10), (1, 1)];
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut values = 0usize;
    for i in 0..10_000 {
        let ind = random_individual(&g, &s, &mut rng).map_err(|e| format!("#{i}: {e}"))?;
        for (m, (lo, hi)) in ind.modules.iter().zip(bounds) {
            let n = m.slots.len();
            check((lo..=hi).contains(&n), format!("#{i}: module with {n} layers outside [{lo}, {hi}]"))?;
        }
        decode_individual(&g, &ind).map_err(|e| format!("#{i}: {e}"))?;
        for record in ind.modules.iter().flat_map(|m| m.records.values()) {
            for p in &record.params {
                let k = &p.name;
                let block = blocks.get(k).ok_or(format!("#{i}: no block named {k}"))?;
                check(p.values.len() == block.count, format!("#{i}: {k} has {} values", p.values.len()))?;
                for &x in &p.values {
                    check(block.contains(x), format!("#{i}: {k}={x} outside [{}, {}]", block.min, block.max))?;
                    values += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!("10000 individuals, {values} parameter values in range, {elapsed:.2?}"))
}

fn operator_closure() -> Outcome {
    let (g, s) = cnn();
    let cfg = OperatorConfig::default();
    let ctx = VariationContext {
        grammar: &g,
        structure: &s,
        config: &cfg,
    };
    let registry = OperatorRegistry::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pool: Vec<Individual> = (0..64).map(|_| random_individual(&g, &s, &mut rng).unwrap()).collect();
    let start = Instant::now();
    let verify = |ind: &Individual, what: &str| -> Result<(), String> {
        ind.audit(&g, &s).map_err(|e| format!("{what}: {e}"))?;
        decode_individual(&g, ind).map_err(|e| format!("{what}: {e}"))?;
        Ok(())
    };
    let mut applied = BTreeMap::new();
    let untouched = pool.clone();
    for name in ["one-point", "bitmask"] {
        let op = registry.crossover(name).unwrap();
        for _ in 0..10_000 {
            let a = &pool[rng.random_range(0..pool.len())];
            let b = &pool[rng.random_range(0..pool.len())];
            let (o1, o2) = op.cross(a, b, &mut rng).map_err(|e| format!("{name}: {e}"))?;
            verify(&o1, name)?;
            verify(&o2, name)?;
            *applied.entry(name).or_insert(0) += 1;
        }
    }
    check(pool == untouched, "crossover modified a parent")?;
    for name in registry.mutation_names() {
        let op = registry.mutation(name).unwrap();
        let mut current = pool.clone();
        let mut done = 0;
        while done < 10_000 {
            let slot = rng.random_range(0..current.len());
            let before = current[slot].clone();
            let result = op.mutate(&current[slot], &ctx, &mut rng);
            check(current[slot] == before, format!("{name} modified its parent"))?;
            match result {
                Ok(m) => {
                    verify(&m, name)?;
                    current[slot] = m;
                    done += 1;
                }
                // saturated at a bound: start that lineage over
                Err(OperatorError::AtMaxLayers(_) | OperatorError::AtMinLayers(_) | OperatorError::NoEligibleSite) => {
                    current[slot] = random_individual(&g, &s, &mut rng).unwrap();
                }
                Err(e) => return Err(format!("{name}: {e}")),
            }
        }
        applied.insert(name, done);
    }
    let mut propagated = 0;
    for trial in 0..100 {
        let base = random_individual(&g, &s, &mut rng).unwrap();
        let module = rng.random_range(0..2);
        let rep = match mutate_replicate_layer(&base, module, &s, &mut rng) {
            Ok(r) => r,
            Err(OperatorError::AtMaxLayers(_)) => mutate_replicate_layer(&base, 1 - module, &s, &mut rng)
                .map_err(|e| format!("trial {trial}: {e}"))?,
            Err(e) => return Err(format!("trial {trial}: {e}")),
        };
        let (m, shared) = rep
            .modules
            .iter()
            .enumerate()
            .find_map(|(mi, md)| {
                md.distinct_records()
                    .into_iter()
                    .find(|&r| md.ref_count(r) > base.modules[mi].ref_count(r).max(1))
                    .map(|r| (mi, r))
            })
            .ok_or(format!("trial {trial}: no shared record after replication"))?;
        let before = rep.modules[m].records[&shared].clone();
        let mut done = false;
        for attempt in 0..10_000 {
            let mutated = if attempt % 2 == 0 {
                mutate_numeric(&rep, &g, &cfg, &mut rng)
            } else {
                mutate_grammatical(&rep, &g, cfg.depth_limit, &mut rng)
            };
            let Ok(mutated) = mutated else { continue };
            let md = &mutated.modules[m];
            if md.records.get(&shared) == Some(&before) || !md.records.contains_key(&shared) {
                continue;
            }
            let expected = decode_layer(&g, &md.records[&shared]).map_err(|e| e.to_string())?;
            let slots: Vec<usize> = (0..md.slots.len()).filter(|&i| rep.modules[m].slots[i] == shared).collect();
            let all_follow = slots.iter().all(|&i| {
                md.slots[i] == shared && decode_layer(&g, &md.records[&md.slots[i]]).ok().as_ref() == Some(&expected)
            });
            check(slots.len() >= 2 && all_follow, format!("trial {trial}: edit did not reach every referring slot"))?;
            done = true;
            break;
        }
        if done {
            propagated += 1;
        }
    }
    check(propagated == 100, format!("replicate-then-mutate propagated in {propagated}/100 trials"))?;
    let counts: Vec<String> = applied.iter().map(|(k, v)| format!("{k} {v}")).collect();
    Ok(format!(
        "{} with invariants kept, propagation 100/100, {:.2?}",
        counts.join(", "),
        start.elapsed()
    ))
}

fn bit_individual(bits: &str) -> Individual {
    let mut m = ModuleGenotype::new(0);
    for c in bits.chars() {
        let rec = LayerRecord {
            start: "bit".into(),
            choices: BTreeMap::from([("bit".to_string(), vec![usize::from(c == '1')])]),
            params: vec![],
        };
        let id = m.add_record(rec);
        m.slots.push(id);
    }
    Individual {
        id: 0,
        modules: vec![m],
        fitness: None,
        lineage: None,
    }
}

fn crossover_fidelity() -> Outcome {
    let g = parse_grammar("<bit> ::= b:0 | b:1").unwrap();
    let bits = |ind: &Individual| -> String {
        decode_individual(&g, ind)
            .unwrap()
            .layers
            .iter()
            .map(|l| l.get("b").unwrap().to_string())
            .collect()
    };
    let (o1, o2) = one_point_at(&bit_individual("111000"), &bit_individual("101010"), 0, 3)
        .map_err(|e| e.to_string())?;
    check(
        bits(&o1) == "111010" && bits(&o2) == "101000",
        format!("got {} / {}", bits(&o1), bits(&o2)),
    )?;

    let g = parse_grammar(CNN_GRAMMAR).unwrap();
    let s = parse_structure("features 1 6\nclassification 1 3\nsoftmax 1 1\nlearning 1 1").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p1 = random_individual(&g, &s, &mut rng).unwrap();
    let p2 = random_individual(&g, &s, &mut rng).unwrap();
    for mask_bits in 0u32..16 {
        let mask: Vec<bool> = (0..4).map(|i| mask_bits & (1 << i) != 0).collect();
        let (a, b) = bitmask_with(&p1, &p2, &mask).map_err(|e| e.to_string())?;
        for (i, &bit) in mask.iter().enumerate() {
            let (from_a, from_b) = if bit { (&p1, &p2) } else { (&p2, &p1) };
            check(
                a.modules[i] == from_a.modules[i] && b.modules[i] == from_b.modules[i],
                format!("mask {mask_bits:04b}: module {i} not complementary"),
            )?;
        }
    }
    Ok("bitstring example reproduced, 16/16 masks complementary".into())
}

fn rate_calibration() -> Outcome {
    let (g, s) = cnn();
    let cfg = OperatorConfig::default();
    let ctx = VariationContext {
        grammar: &g,
        structure: &s,
        config: &cfg,
    };
    let registry = OperatorRegistry::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pool: Vec<Individual> = (0..32).map(|_| random_individual(&g, &s, &mut rng).unwrap()).collect();
    let (mut crossed, mut mutated, mut total) = (0usize, 0usize, 0usize);
    for _ in 0..5_000 {
        let a = &pool[rng.random_range(0..pool.len())];
        let b = &pool[rng.random_range(0..pool.len())];
        let (o1, o2) = apply_variation(a, b, &ctx, &registry, &mut rng as &mut dyn RngCore)
            .map_err(|e| e.to_string())?;
        for o in [o1, o2] {
            let tags = o.lineage.map(|l| l.operators).unwrap_or_default();
            crossed += usize::from(tags.iter().any(|t| is_crossover_tag(t)));
            mutated += usize::from(tags.iter().any(|t| is_mutation_tag(t)));
            total += 1;
        }
    }
    let fc = crossed as f64 / total as f64;
    let fm = mutated as f64 / total as f64;
    check((fc - 0.7).abs() <= 0.02, format!("crossover frequency {fc}"))?;
    check((fm - 0.3).abs() <= 0.02, format!("mutation frequency {fm}"))?;
    Ok(format!("{total} offspring: crossover {fc:.4}, mutation {fm:.4}"))
}

fn trainer_numerics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for point in 0..20 {
        let mut net = Mlp::new(
            3,
            &[
                (6, true, Activation::Linear),
                (5, true, Activation::Relu),
                (4, true, Activation::Sigmoid),
                (3, true, Activation::Softmax),
            ],
            &mut rng,
        );
        let mut p = net.parameters();
        p.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
        net.set_parameters(&p);
        let xs: Vec<Vec<f64>> = (0..10).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<usize> = (0..10).map(|_| rng.random_range(0..3)).collect();
        let xr: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let analytic = net.loss_and_gradient(&xr, &ys).1.flatten();
        let h = 1e-5;
        let mut numeric = Vec::with_capacity(p.len());
        for i in 0..p.len() {
            let mut q = p.clone();
            q[i] = p[i] + h;
            net.set_parameters(&q);
            let up = net.loss(&xr, &ys);
            q[i] = p[i] - h;
            net.set_parameters(&q);
            let down = net.loss(&xr, &ys);
            numeric.push((up - down) / (2.0 * h));
        }
        net.set_parameters(&p);
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / (norm(&analytic) + norm(&numeric));
        worst = worst.max(rel);
        check(rel < 1e-4, format!("point {point}: relative error {rel:e}"))?;
        for x in &xs {
            let sum: f64 = net.predict_proba(x).iter().sum();
            check((sum - 1.0).abs() < 1e-9, format!("softmax row sums to {sum}"))?;
        }
        let mut frozen = net.clone();
        let (_, grad) = frozen.loss_and_gradient(&xr, &ys);
        frozen.momentum_step(&grad, &mut Gradients::zeros_like(&net), 0.0, 0.9);
        check(frozen == net, "a zero learning-rate step changed the weights")?;
    }
    Ok(format!("20 points, worst relative error {worst:.2e}"))
}

fn surrogate_setup() -> (Grammar, GaStructure, SurrogateEvaluator, EvolutionConfig) {
    let g = parse_grammar(CNN_GRAMMAR).unwrap();
    let s = parse_structure("features 1 5\nsoftmax 1 1").unwrap();
    let target = SurrogateTarget::from_lines(&[
        "layer:pool-max kernel-size:2 stride:2 padding:valid",
        "layer:fc act:softmax num-units:10 bias:True",
    ])
    .unwrap();
    let cfg = EvolutionConfig {
        population_size: 20,
        generations: 30,
        master_seed: 0,
        ..EvolutionConfig::default()
    };
    (g, s, SurrogateEvaluator::new(target), cfg)
}

fn surrogate_end_to_end() -> Outcome {
    let (g, s, eval, cfg) = surrogate_setup();
    let start = Instant::now();
    let a = evolve(&g, &s, &cfg, &eval).map_err(|e| e.to_string())?;
    let b = evolve(&g, &s, &cfg, &eval).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let best = a.stats.last().unwrap().best_fitness;
    check(best >= 0.95, format!("final best fitness {best}"))?;
    for w in a.stats.windows(2) {
        check(
            w[1].best_fitness >= w[0].best_fitness,
            format!("best fitness fell at generation {}", w[1].generation),
        )?;
    }
    let csv = |r: &neurogram::engine::RunResult| {
        let mut buf = Vec::new();
        write_stats_rows(&mut buf, &r.stats).unwrap();
        buf
    };
    check(csv(&a) == csv(&b), "repeated runs produced different stats")?;
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!(
        "best {best} (generation 0: {}), two runs identical, {elapsed:.2?}",
        a.stats[0].best_fitness
    ))
}

struct DenseRun {
    seed: u64,
    gen0_best: f64,
    final_best: f64,
    test_accuracy: f64,
    best: neurogram::NetworkDescriptor,
}

fn dense_budget() -> EvaluationBudget {
    EvaluationBudget::default()
}

fn rings() -> Arc<neurogram::evaluator::DatasetSplit> {
    Arc::new(make_toy_dataset(ToyKind::Rings, 1000, 0.25, 1).unwrap())
}

fn neuroevolution_end_to_end(runs: &mut Vec<DenseRun>) -> Outcome {
    let g = parse_grammar(DENSE_GRAMMAR).unwrap();
    let s = parse_structure(DENSE_STRUCTURE).unwrap();
    let split = rings();
    check(
        (split.train.len(), split.validation.len(), split.test.len()) == (700, 150, 150),
        "split sizes",
    )?;
    let eval = DenseEvaluator::new(split.clone());
    let start = Instant::now();
    for seed in 0..10 {
        let cfg = EvolutionConfig {
            population_size: 10,
            generations: 10,
            master_seed: seed,
            budget: dense_budget(),
            ..EvolutionConfig::default()
        };
        let r = evolve(&g, &s, &cfg, &eval).map_err(|e| e.to_string())?;
        let budget = EvaluationBudget {
            eval_seed: derive_seed(seed, Purpose::Evaluation, r.best_individual.id, cfg.budget.eval_seed),
            ..cfg.budget.clone()
        };
        let trained = train_model(&r.best_descriptor, &split, &budget);
        check(
            Some(trained.report.fitness) == r.best_individual.fitness,
            format!("seed {seed}: retraining the best network did not reproduce its fitness"),
        )?;
        let model = trained.model.ok_or(format!("seed {seed}: best network is invalid"))?;
        runs.push(DenseRun {
            seed,
            gen0_best: r.stats[0].best_fitness,
            final_best: r.stats.last().unwrap().best_fitness,
            test_accuracy: test_accuracy(&model, &split),
            best: r.best_descriptor,
        });
    }
    let elapsed = start.elapsed();
    let improved = runs.iter().filter(|r| r.final_best > r.gen0_best).count();
    let low: Vec<String> = runs
        .iter()
        .filter(|r| r.test_accuracy < 0.9)
        .map(|r| format!("seed {} test {}", r.seed, r.test_accuracy))
        .collect();
    check(improved >= 9, format!("only {improved}/10 seeds improved on generation 0"))?;
    check(low.is_empty(), low.join(", "))?;
    within(elapsed, Duration::from_secs(300))?;
    let min_test = runs.iter().map(|r| r.test_accuracy).fold(1.0, f64::min);
    Ok(format!("{improved}/10 seeds improved, min best test accuracy {min_test:.3}, {elapsed:.2?}"))
}

fn ensemble_property(runs: &[DenseRun]) -> Outcome {
    let run = runs.first().ok_or("no neuroevolution run to take a network from")?;
    let split = rings();
    let models: Vec<Mlp> = (0..2)
        .map(|k| {
            let budget = EvaluationBudget {
                eval_seed: 1000 + k,
                ..dense_budget()
            };
            train_model(&run.best, &split, &budget).model.ok_or("invalid network")
        })
        .collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inputs: Vec<Vec<f64>> = (0..1000).map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
    let single = ensemble_predict(&[&models[0]], &inputs).map_err(|e| e.to_string())?;
    let direct: Vec<usize> = inputs
        .iter()
        .map(|x| neurogram::evaluator::argmax(&models[0].predict_proba(x)))
        .collect();
    check(single == direct, "a one-model ensemble changed a prediction")?;
    let pair = ensemble_predict(&[&models[0], &models[1]], &inputs).map_err(|e| e.to_string())?;
    let oracle: Vec<usize> = inputs
        .iter()
        .map(|x| {
            let a = models[0].predict_proba(x);
            let b = models[1].predict_proba(x);
            let avg: Vec<f64> = a.iter().zip(&b).map(|(p, q)| (p + q) / 2.0).collect();
            let top = avg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            avg.iter().position(|&v| v == top).unwrap()
        })
        .collect();
    check(pair == oracle, "two-model ensemble differs from the averaged-confidence oracle")?;
    let disagreements = direct.iter().zip(&pair).filter(|(a, b)| a != b).count();
    Ok(format!("k=1 identical, k=2 matches oracle on 1000 inputs ({disagreements} differ from member 0)"))
}

fn checkpoint_replay() -> Outcome {
    let (g, s, eval, cfg) = surrogate_setup();
    let engine = Engine::new(&g, &s, &cfg, &eval).map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let full = RunDirectory::new(tmp.path().join("full"));
    let part = RunDirectory::new(tmp.path().join("part"));
    run_in_directory(&engine, &full, false, None).map_err(|e| e.to_string())?;
    run_in_directory(&engine, &part, false, Some(10)).map_err(|e| e.to_string())?;
    run_in_directory(&engine, &part, true, None).map_err(|e| e.to_string())?;
    let a = std::fs::read(full.stats_path()).map_err(|e| e.to_string())?;
    let b = std::fs::read(part.stats_path()).map_err(|e| e.to_string())?;
    check(a == b, "resumed stats.csv differs from the uninterrupted run")?;
    Ok(format!("interrupted at 10 of {}, stats.csv byte-identical ({} bytes)", cfg.generations, a.len()))
}

fn stats_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let n = rng.random_range(2..200);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let slope = rng.random_range(-2.0..2.0);
        let y: Vec<f64> = x.iter().map(|v| slope * v + rng.random_range(-50.0..50.0)).collect();
        let nf = n as f64;
        let mx = x.iter().sum::<f64>() / nf;
        let my = y.iter().sum::<f64>() / nf;
        let cov = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / nf;
        let sx = (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / nf).sqrt();
        let sy = (y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / nf).sqrt();
        let r = pearson(&x, &y).ok_or(format!("series {i}: undefined"))?;
        let err = (r - cov / (sx * sy)).abs();
        worst = worst.max(err);
        check(err < 1e-12, format!("series {i}: error {err:e}"))?;
    }
    Ok(format!("100 series, worst error {worst:.1e}"))
}

fn main() {
    let mut runs = Vec::new();
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome + '_>)> = vec![
        ("1 grammar fixture", Box::new(grammar_fixture)),
        ("2 representation fuzz", Box::new(representation_fuzz)),
        ("3 operator closure", Box::new(operator_closure)),
        ("4 crossover fidelity", Box::new(crossover_fidelity)),
        ("5 rate calibration", Box::new(rate_calibration)),
        ("6 trainer numerics", Box::new(trainer_numerics)),
        ("7 surrogate end-to-end", Box::new(surrogate_end_to_end)),
    ];
    let mut failed = 0;
    let mut report = |name: &str, start: Instant, outcome: Outcome| {
        let t = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {name:<28} {t:>10.2?}  {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<28} {t:>10.2?}  {why}");
            }
        }
    };
    for (name, f) in criteria {
        let start = Instant::now();
        report(name, start, f());
    }
    let start = Instant::now();
    let outcome = neuroevolution_end_to_end(&mut runs);
    report("8 neuroevolution end-to-end", start, outcome);
    let start = Instant::now();
    report("9 ensemble property", start, ensemble_property(&runs));
    let start = Instant::now();
    report("10 checkpoint replay", start, checkpoint_replay());
    let start = Instant::now();
    report("11 stats oracle", start, stats_oracle());
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 11 acceptance criteria passed");
}
