//! Rule evaluation, negation elimination and CNF conversion.
//!
//! Negations never survive: `NOT c IN S` becomes `c IN (C \ S)`, so every
//! clause is a plain set of `(concept, outcome)` pairs. This is what lets a
//! clause map onto a single linear inequality over marginals.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::rules::RuleAst;
use crate::schema::ConceptSchema;

pub const DEFAULT_CLAUSE_BUDGET: usize = 10_000;

/// Truth value of the rule at a concept vector (1-based outcomes).
pub fn evaluate(ast: &RuleAst, c: &[usize]) -> bool {
    match ast {
        RuleAst::Literal(i, set) => set.contains(&c[*i]),
        RuleAst::Not(a) => !evaluate(a, c),
        RuleAst::And(xs) => xs.iter().all(|x| evaluate(x, c)),
        RuleAst::Or(xs) => xs.iter().any(|x| evaluate(x, c)),
        RuleAst::Implies(a, b) => !evaluate(a, c) || evaluate(b, c),
        RuleAst::Iff(a, b) => evaluate(a, c) == evaluate(b, c),
        RuleAst::ConstTrue => true,
        RuleAst::ConstFalse => false,
    }
}

/// Rewrites the rule into an equivalent tree of `And`, `Or` and `Literal`
/// nodes (or a bare `ConstTrue`). Literals on the same concept inside one
/// `And`/`Or` are merged and children are put in canonical order.
pub fn eliminate_negations(ast: &RuleAst, schema: &ConceptSchema) -> Result<RuleAst> {
    validate_literals(ast, schema)?;
    match push_negations(ast, false, schema) {
        RuleAst::ConstFalse => Err(Error::UnsatisfiableRule),
        other => Ok(other),
    }
}

pub(crate) fn validate_literals(ast: &RuleAst, schema: &ConceptSchema) -> Result<()> {
    let mut err = None;
    ast.for_each_literal(&mut |i, set| {
        if err.is_some() {
            return;
        }
        if i >= schema.len() {
            err = Some(Error::InvalidRule(format!("literal references concept {i}")));
        } else if set.is_empty() {
            err = Some(Error::InvalidRule(format!(
                "literal on `{}` has an empty outcome set",
                schema.concept(i).name
            )));
        } else if set.iter().any(|&o| o == 0 || o > schema.outcome_count(i)) {
            err = Some(Error::InvalidRule(format!(
                "literal on `{}` has an outcome outside 1..={}",
                schema.concept(i).name,
                schema.outcome_count(i)
            )));
        }
    });
    err.map_or(Ok(()), Err)
}

fn literal(i: usize, set: BTreeSet<usize>, schema: &ConceptSchema) -> RuleAst {
    if set.is_empty() {
        RuleAst::ConstFalse
    } else if set.len() == schema.outcome_count(i) {
        RuleAst::ConstTrue
    } else {
        RuleAst::Literal(i, set)
    }
}

fn complement(i: usize, set: &BTreeSet<usize>, schema: &ConceptSchema) -> BTreeSet<usize> {
    (1..=schema.outcome_count(i))
        .filter(|o| !set.contains(o))
        .collect()
}

fn push_negations(ast: &RuleAst, negated: bool, schema: &ConceptSchema) -> RuleAst {
    match (ast, negated) {
        (RuleAst::Literal(i, set), false) => literal(*i, set.clone(), schema),
        (RuleAst::Literal(i, set), true) => literal(*i, complement(*i, set, schema), schema),
        (RuleAst::ConstTrue, false) | (RuleAst::ConstFalse, true) => RuleAst::ConstTrue,
        (RuleAst::ConstTrue, true) | (RuleAst::ConstFalse, false) => RuleAst::ConstFalse,
        (RuleAst::Not(a), _) => push_negations(a, !negated, schema),
        (RuleAst::And(xs), false) | (RuleAst::Or(xs), true) => conjoin(
            xs.iter().map(|x| push_negations(x, negated, schema)).collect(),
            schema,
        ),
        (RuleAst::Or(xs), false) | (RuleAst::And(xs), true) => disjoin(
            xs.iter().map(|x| push_negations(x, negated, schema)).collect(),
            schema,
        ),
        (RuleAst::Implies(a, b), false) => disjoin(
            vec![push_negations(a, true, schema), push_negations(b, false, schema)],
            schema,
        ),
        (RuleAst::Implies(a, b), true) => conjoin(
            vec![push_negations(a, false, schema), push_negations(b, true, schema)],
            schema,
        ),
        (RuleAst::Iff(a, b), false) => conjoin(
            vec![
                disjoin(
                    vec![push_negations(a, true, schema), push_negations(b, false, schema)],
                    schema,
                ),
                disjoin(
                    vec![push_negations(b, true, schema), push_negations(a, false, schema)],
                    schema,
                ),
            ],
            schema,
        ),
        (RuleAst::Iff(a, b), true) => conjoin(
            vec![
                disjoin(
                    vec![push_negations(a, false, schema), push_negations(b, false, schema)],
                    schema,
                ),
                disjoin(
                    vec![push_negations(a, true, schema), push_negations(b, true, schema)],
                    schema,
                ),
            ],
            schema,
        ),
    }
}

fn conjoin(items: Vec<RuleAst>, schema: &ConceptSchema) -> RuleAst {
    combine(items, true, schema)
}

fn disjoin(items: Vec<RuleAst>, schema: &ConceptSchema) -> RuleAst {
    combine(items, false, schema)
}

/// Builds a flattened, constant-folded `And` (`is_and`) or `Or` node.
fn combine(items: Vec<RuleAst>, is_and: bool, schema: &ConceptSchema) -> RuleAst {
    let (identity, absorbing) = if is_and {
        (RuleAst::ConstTrue, RuleAst::ConstFalse)
    } else {
        (RuleAst::ConstFalse, RuleAst::ConstTrue)
    };
    let mut flat = Vec::new();
    let mut stack = items;
    stack.reverse();
    while let Some(item) = stack.pop() {
        match item {
            RuleAst::And(xs) if is_and => stack.extend(xs.into_iter().rev()),
            RuleAst::Or(xs) if !is_and => stack.extend(xs.into_iter().rev()),
            x if x == identity => {}
            x if x == absorbing => return absorbing,
            x => flat.push(x),
        }
    }

    // merge literals on the same concept
    let mut per_concept: std::collections::BTreeMap<usize, BTreeSet<usize>> = Default::default();
    let mut rest = Vec::new();
    for item in flat {
        match item {
            RuleAst::Literal(i, set) => {
                per_concept
                    .entry(i)
                    .and_modify(|acc| {
                        *acc = if is_and {
                            acc.intersection(&set).copied().collect()
                        } else {
                            acc.union(&set).copied().collect()
                        }
                    })
                    .or_insert(set);
            }
            other => rest.push(other),
        }
    }
    let mut children = Vec::new();
    for (i, set) in per_concept {
        match literal(i, set, schema) {
            x if x == identity => {}
            x if x == absorbing => return absorbing,
            x => children.push(x),
        }
    }
    rest.sort();
    rest.dedup();
    children.extend(rest);
    match children.len() {
        0 => identity,
        1 => children.pop().unwrap(),
        _ if is_and => RuleAst::And(children),
        _ => RuleAst::Or(children),
    }
}

/// Disjunction of `(concept, outcome)` literals, outcomes 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Clause(BTreeSet<(usize, usize)>);

impl Clause {
    pub fn new(literals: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self(literals.into_iter().collect())
    }

    pub fn literals(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_satisfied(&self, c: &[usize]) -> bool {
        self.0.iter().any(|&(i, j)| c[i] == j)
    }

    /// True if the clause contains every outcome of some concept.
    pub fn is_tautology(&self, schema: &ConceptSchema) -> bool {
        let mut count = 0;
        let mut current = usize::MAX;
        for &(i, _) in &self.0 {
            if i != current {
                current = i;
                count = 0;
            }
            count += 1;
            if count == schema.outcome_count(i) {
                return true;
            }
        }
        false
    }

    fn subsumes(&self, other: &Clause) -> bool {
        self.0.len() <= other.0.len() && self.0.is_subset(&other.0)
    }

    fn union(&self, other: &Clause) -> Clause {
        Clause(self.0.union(&other.0).copied().collect())
    }
}

/// Conjunction of clauses; no clauses means TRUE.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Cnf {
    pub clauses: Vec<Clause>,
}

impl Cnf {
    pub fn new(clauses: Vec<Clause>) -> Self {
        Self { clauses }
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn is_satisfied(&self, c: &[usize]) -> bool {
        self.clauses.iter().all(|k| k.is_satisfied(c))
    }

    /// The CNF as a rule tree (`ConstTrue` when empty).
    pub fn to_ast(&self) -> RuleAst {
        let clause_ast = |k: &Clause| {
            let mut per: std::collections::BTreeMap<usize, BTreeSet<usize>> = Default::default();
            for (i, j) in k.literals() {
                per.entry(i).or_default().insert(j);
            }
            let mut lits: Vec<RuleAst> = per.into_iter().map(|(i, s)| RuleAst::Literal(i, s)).collect();
            if lits.len() == 1 {
                lits.pop().unwrap()
            } else {
                RuleAst::Or(lits)
            }
        };
        match self.clauses.len() {
            0 => RuleAst::ConstTrue,
            1 => clause_ast(&self.clauses[0]),
            _ => RuleAst::And(self.clauses.iter().map(clause_ast).collect()),
        }
    }
}

/// Removes tautologies, duplicates and subsumed clauses. Keeps first-seen order.
pub fn simplify_cnf(cnf: &Cnf, schema: &ConceptSchema) -> Cnf {
    Cnf::new(simplify_clauses(cnf.clauses.clone(), schema))
}

fn simplify_clauses(clauses: Vec<Clause>, schema: &ConceptSchema) -> Vec<Clause> {
    let mut candidates: Vec<(usize, Clause)> = clauses
        .into_iter()
        .filter(|k| !k.is_tautology(schema))
        .enumerate()
        .collect();
    // shorter clauses first so that a clause is only compared against
    // clauses that could subsume it
    candidates.sort_by(|a, b| a.1.len().cmp(&b.1.len()).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, Clause)> = Vec::new();
    for (pos, k) in candidates {
        if !kept.iter().any(|(_, q)| q.subsumes(&k)) {
            kept.push((pos, k));
        }
    }
    kept.sort_by_key(|(pos, _)| *pos);
    kept.into_iter().map(|(_, k)| k).collect()
}

/// Converts a negation-free rule into simplified CNF by distributing OR over
/// AND. Fails with [`Error::CnfExplosion`] once an intermediate clause list
/// grows past `clause_budget`.
pub fn to_cnf(nnf: &RuleAst, schema: &ConceptSchema, clause_budget: usize) -> Result<Cnf> {
    let clauses = cnf_clauses(nnf, schema, clause_budget)?;
    if clauses.iter().any(Clause::is_empty) {
        return Err(Error::UnsatisfiableRule);
    }
    Ok(Cnf::new(clauses))
}

fn cnf_clauses(node: &RuleAst, schema: &ConceptSchema, budget: usize) -> Result<Vec<Clause>> {
    match node {
        RuleAst::Literal(i, set) => Ok(simplify_clauses(
            vec![Clause::new(set.iter().map(|&j| (*i, j)))],
            schema,
        )),
        RuleAst::ConstTrue => Ok(Vec::new()),
        RuleAst::ConstFalse => Ok(vec![Clause::default_empty()]),
        RuleAst::And(xs) => {
            let mut all = Vec::new();
            for x in xs {
                all.extend(cnf_clauses(x, schema, budget)?);
                if all.len() > budget {
                    all = simplify_clauses(all, schema);
                    if all.len() > budget {
                        return Err(Error::CnfExplosion { budget });
                    }
                }
            }
            Ok(simplify_clauses(all, schema))
        }
        RuleAst::Or(xs) => {
            // the empty clause is the identity of disjunction
            let mut acc = vec![Clause::default_empty()];
            for x in xs {
                let rhs = cnf_clauses(x, schema, budget)?;
                let mut product = Vec::new();
                for a in &acc {
                    for b in &rhs {
                        let k = a.union(b);
                        if k.is_tautology(schema) {
                            continue;
                        }
                        product.push(k);
                        if product.len() > budget {
                            return Err(Error::CnfExplosion { budget });
                        }
                    }
                }
                acc = simplify_clauses(product, schema);
            }
            Ok(acc)
        }
        RuleAst::Not(_) | RuleAst::Implies(..) | RuleAst::Iff(..) => Err(Error::InvalidRule(
            "to_cnf expects a negation-free rule; call eliminate_negations first".into(),
        )),
    }
}

impl Clause {
    fn default_empty() -> Self {
        Clause(BTreeSet::new())
    }
}

/// Negation elimination followed by CNF conversion.
pub fn compile_cnf(ast: &RuleAst, schema: &ConceptSchema, clause_budget: usize) -> Result<Cnf> {
    let nnf = eliminate_negations(ast, schema)?;
    to_cnf(&nnf, schema, clause_budget)
}
