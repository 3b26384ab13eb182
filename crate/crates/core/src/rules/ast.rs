use std::collections::BTreeSet;

/// Propositional formula over concept literals.
///
/// `Literal(i, S)` is true iff concept `i` takes one of the 1-based outcomes
/// in `S`; a set with several outcomes abbreviates their disjunction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleAst {
    Literal(usize, BTreeSet<usize>),
    Not(Box<RuleAst>),
    And(Vec<RuleAst>),
    Or(Vec<RuleAst>),
    Implies(Box<RuleAst>, Box<RuleAst>),
    Iff(Box<RuleAst>, Box<RuleAst>),
    ConstTrue,
    ConstFalse,
}

impl RuleAst {
    pub fn lit(concept: usize, outcomes: impl IntoIterator<Item = usize>) -> Self {
        RuleAst::Literal(concept, outcomes.into_iter().collect())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(inner: RuleAst) -> Self {
        RuleAst::Not(Box::new(inner))
    }

    pub fn implies(lhs: RuleAst, rhs: RuleAst) -> Self {
        RuleAst::Implies(Box::new(lhs), Box::new(rhs))
    }

    pub fn iff(lhs: RuleAst, rhs: RuleAst) -> Self {
        RuleAst::Iff(Box::new(lhs), Box::new(rhs))
    }

    /// Visits every literal in the tree.
    pub fn for_each_literal(&self, f: &mut impl FnMut(usize, &BTreeSet<usize>)) {
        match self {
            RuleAst::Literal(i, set) => f(*i, set),
            RuleAst::Not(a) => a.for_each_literal(f),
            RuleAst::And(xs) | RuleAst::Or(xs) => {
                for x in xs {
                    x.for_each_literal(f);
                }
            }
            RuleAst::Implies(a, b) | RuleAst::Iff(a, b) => {
                a.for_each_literal(f);
                b.for_each_literal(f);
            }
            RuleAst::ConstTrue | RuleAst::ConstFalse => {}
        }
    }

    /// Rebuilds the tree with every literal replaced by `f(concept, outcomes)`.
    pub fn map_literals(&self, f: &mut impl FnMut(usize, &BTreeSet<usize>) -> RuleAst) -> RuleAst {
        match self {
            RuleAst::Literal(i, set) => f(*i, set),
            RuleAst::Not(a) => RuleAst::not(a.map_literals(f)),
            RuleAst::And(xs) => RuleAst::And(xs.iter().map(|x| x.map_literals(f)).collect()),
            RuleAst::Or(xs) => RuleAst::Or(xs.iter().map(|x| x.map_literals(f)).collect()),
            RuleAst::Implies(a, b) => RuleAst::implies(a.map_literals(f), b.map_literals(f)),
            RuleAst::Iff(a, b) => RuleAst::iff(a.map_literals(f), b.map_literals(f)),
            RuleAst::ConstTrue => RuleAst::ConstTrue,
            RuleAst::ConstFalse => RuleAst::ConstFalse,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            RuleAst::Literal(..) | RuleAst::ConstTrue | RuleAst::ConstFalse => 1,
            RuleAst::Not(a) => 1 + a.depth(),
            RuleAst::And(xs) | RuleAst::Or(xs) => 1 + xs.iter().map(|x| x.depth()).max().unwrap_or(0),
            RuleAst::Implies(a, b) | RuleAst::Iff(a, b) => 1 + a.depth().max(b.depth()),
        }
    }
}
