//! Random schemas, rules and inputs shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use rulehead::rules::RuleAst;
use rulehead::schema::{Concept, ConceptSchema};

pub fn random_schema(rng: &mut impl Rng, max_concepts: usize, max_outcomes: usize) -> ConceptSchema {
    let m = rng.gen_range(1..=max_concepts);
    let concepts = (0..m)
        .map(|i| {
            let n = rng.gen_range(2..=max_outcomes);
            let values: Vec<String> = (1..=n).map(|v| format!("v{v}")).collect();
            let refs: Vec<&str> = values.iter().map(String::as_str).collect();
            Concept::new(format!("c{i}"), &refs)
        })
        .collect();
    ConceptSchema::new(concepts).unwrap()
}

pub fn random_literal(rng: &mut impl Rng, schema: &ConceptSchema) -> RuleAst {
    let i = rng.gen_range(0..schema.len());
    let n = schema.outcome_count(i);
    let mut set: BTreeSet<usize> = (1..=n).filter(|_| rng.gen_bool(0.35)).collect();
    if set.is_empty() {
        set.insert(rng.gen_range(1..=n));
    }
    RuleAst::Literal(i, set)
}

/// Random formula of depth at most `depth`.
pub fn random_ast(rng: &mut impl Rng, schema: &ConceptSchema, depth: usize) -> RuleAst {
    if depth == 0 || rng.gen_bool(0.3) {
        return match rng.gen_range(0..40) {
            0 => RuleAst::ConstTrue,
            1 => RuleAst::ConstFalse,
            _ => random_literal(rng, schema),
        };
    }
    let sub = |rng: &mut _| Box::new(random_ast(rng, schema, depth - 1));
    match rng.gen_range(0..5) {
        0 => RuleAst::Not(sub(rng)),
        1 => RuleAst::And((0..rng.gen_range(2..=3)).map(|_| *sub(rng)).collect()),
        2 => RuleAst::Or((0..rng.gen_range(2..=3)).map(|_| *sub(rng)).collect()),
        3 => RuleAst::Implies(sub(rng), sub(rng)),
        _ => RuleAst::Iff(sub(rng), sub(rng)),
    }
}

/// A random rule that admits at least one joint state.
pub fn random_satisfiable(rng: &mut impl Rng, schema: &ConceptSchema, depth: usize) -> RuleAst {
    loop {
        let ast = random_ast(rng, schema, depth);
        if rulehead::state_space::admissible_mask(&ast, schema, 1 << 20).is_ok() {
            return ast;
        }
    }
}

pub fn random_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Random point of the probability simplex.
pub fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -rng.gen_range(1e-9f64..1.0).ln()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}
