//! Joint-state enumeration and the objects derived from it: the admissible
//! mask `u`, the placement `W`, marginalization and the vertex matrix `V`.
//!
//! Joint states are numbered `1..=t` in mixed radix with concept 0 as the
//! most significant digit, so the woodpecker schema enumerates as
//! `(1,1,1), (1,1,2), (1,1,3), (1,2,1), …, (2,2,3)`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logic::{evaluate, validate_literals};
use crate::rules::RuleAst;
use crate::scalar::Scalar;
use crate::schema::{Concept, ConceptSchema, ConceptVector, MarginalVector};

pub const DEFAULT_ENUMERATION_BUDGET: u64 = 1 << 24;
pub const DEFAULT_VERTEX_BUDGET: u64 = 1 << 26;

/// Joint state number (1-based) of a concept vector.
pub fn encode_state(c: &[usize], schema: &ConceptSchema) -> u64 {
    let mut k = 0u64;
    for (i, &v) in c.iter().enumerate() {
        k = k * schema.outcome_count(i) as u64 + (v as u64 - 1);
    }
    k + 1
}

pub fn decode_state(k: u64, schema: &ConceptSchema) -> Result<ConceptVector> {
    let total = schema
        .total_states()
        .ok_or_else(|| Error::Schema("joint state count does not fit in 64 bits".into()))?;
    if k == 0 || k > total {
        return Err(Error::StateIndex { index: k, total });
    }
    let mut rest = k - 1;
    let mut values = vec![0; schema.len()];
    for i in (0..schema.len()).rev() {
        let n = schema.outcome_count(i) as u64;
        values[i] = (rest % n) as usize + 1;
        rest /= n;
    }
    Ok(ConceptVector(values))
}

fn checked_total(schema: &ConceptSchema, budget: u64) -> Result<u64> {
    match schema.total_states() {
        Some(t) if t <= budget => Ok(t),
        _ => Err(Error::EnumerationBudgetExceeded {
            states: schema.total_states_wide(),
            budget,
        }),
    }
}

/// Calls `f(k, c)` for every joint state (0-based `k`) in order.
pub fn for_each_state(schema: &ConceptSchema, mut f: impl FnMut(usize, &[usize])) {
    let counts = schema.outcome_counts();
    let mut c = vec![1usize; counts.len()];
    let total = schema.total_states().expect("caller checked the state count") as usize;
    for k in 0..total {
        f(k, &c);
        for i in (0..counts.len()).rev() {
            if c[i] < counts[i] {
                c[i] += 1;
                break;
            }
            c[i] = 1;
        }
    }
}

/// Binary mask over the `t` joint states, `u_k = g(M⁻¹(k))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissibleMask {
    bits: Vec<bool>,
    admissible: usize,
}

impl AdmissibleMask {
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        let admissible = bits.iter().filter(|&&b| b).count();
        if admissible == 0 {
            return Err(Error::UnsatisfiableRule);
        }
        Ok(Self { bits, admissible })
    }

    pub fn all_ones(total: usize) -> Self {
        Self {
            bits: vec![true; total],
            admissible: total,
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Total number of joint states `t`.
    pub fn total(&self) -> usize {
        self.bits.len()
    }

    /// Number of admissible states `d`.
    pub fn admissible_count(&self) -> usize {
        self.admissible
    }

    /// Whether 1-based joint state `k` satisfies the rules.
    pub fn is_admissible(&self, k: u64) -> bool {
        self.bits[(k - 1) as usize]
    }

    /// 1-based numbers of the admissible states, ascending.
    pub fn admissible_states(&self) -> Vec<u64> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(k, _)| k as u64 + 1)
            .collect()
    }
}

pub fn admissible_mask(ast: &RuleAst, schema: &ConceptSchema, budget: u64) -> Result<AdmissibleMask> {
    validate_literals(ast, schema)?;
    let total = checked_total(schema, budget)? as usize;
    let mut bits = vec![false; total];
    for_each_state(schema, |k, c| bits[k] = evaluate(ast, c));
    AdmissibleMask::from_bits(bits)
}

/// Sparse placement `W ∈ {0,1}^{t×d}`: column `k` holds a single one at
/// row `states[k]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementMatrix {
    /// 1-based joint state of each admissible slot, strictly increasing.
    pub states: Vec<u64>,
    pub total: u64,
}

impl PlacementMatrix {
    pub fn admissible_count(&self) -> usize {
        self.states.len()
    }

    /// `W π̃`, a length-`t` joint distribution.
    pub fn place<S: Scalar>(&self, admissible_probs: &[S]) -> Vec<S> {
        assert_eq!(admissible_probs.len(), self.states.len());
        let mut pi = vec![S::zero(); self.total as usize];
        for (&k, &p) in self.states.iter().zip(admissible_probs) {
            pi[(k - 1) as usize] = p;
        }
        pi
    }

    /// Concept vectors of the admissible slots, in slot order.
    pub fn decoded(&self, schema: &ConceptSchema) -> Vec<ConceptVector> {
        self.states
            .iter()
            .map(|&k| decode_state(k, schema).expect("placement states are in range"))
            .collect()
    }

    /// Checks the structural invariant: one non-zero per column, at most one per row.
    pub fn is_valid(&self) -> bool {
        self.states.windows(2).all(|w| w[0] < w[1])
            && self.states.iter().all(|&k| k >= 1 && k <= self.total)
            && !self.states.is_empty()
    }
}

pub fn placement_matrix(mask: &AdmissibleMask) -> PlacementMatrix {
    PlacementMatrix {
        states: mask.admissible_states(),
        total: mask.total() as u64,
    }
}

/// Marginal distribution of every concept under a joint distribution `π`.
pub fn marginalize<S: Scalar>(pi: &[S], schema: &ConceptSchema) -> Result<MarginalVector<S>> {
    let total = schema
        .total_states()
        .ok_or_else(|| Error::Schema("joint state count does not fit in 64 bits".into()))?;
    if pi.len() as u64 != total {
        return Err(Error::Dimension(format!(
            "joint distribution has {} entries, schema has {total} states",
            pi.len()
        )));
    }
    let offsets: Vec<usize> = (0..schema.len()).map(|i| schema.block(i).start).collect();
    let mut out = MarginalVector::zeros(schema.marginal_width());
    let p = out.as_mut_slice();
    for_each_state(schema, |k, c| {
        let w = pi[k];
        if w != S::zero() {
            for (i, &v) in c.iter().enumerate() {
                p[offsets[i] + v - 1] = p[offsets[i] + v - 1] + w;
            }
        }
    });
    Ok(out)
}

/// Dense `s × d` matrix whose columns are the one-hot marginals of the
/// admissible states. Stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexMatrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> VertexMatrix<S> {
    pub fn from_columns(rows: usize, columns: &[Vec<S>]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::UnsatisfiableRule);
        }
        let mut data = Vec::with_capacity(rows * columns.len());
        for col in columns {
            if col.len() != rows {
                return Err(Error::Dimension(format!(
                    "vertex column has {} entries, expected {rows}",
                    col.len()
                )));
            }
            data.extend_from_slice(col);
        }
        Ok(Self {
            rows,
            cols: columns.len(),
            data,
        })
    }

    /// Marginal width `s`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of vertices `d`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, k: usize) -> &[S] {
        &self.data[k * self.rows..(k + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[S]> {
        (0..self.cols).map(move |k| self.column(k))
    }

    pub fn get(&self, row: usize, col: usize) -> S {
        self.data[col * self.rows + row]
    }

    /// `V w` for a weight vector of length `d`.
    pub fn mul(&self, weights: &[S]) -> Vec<S> {
        assert_eq!(weights.len(), self.cols);
        let mut out = vec![S::zero(); self.rows];
        for (col, &w) in self.columns().zip(weights) {
            for (o, &v) in out.iter_mut().zip(col) {
                *o = *o + v * w;
            }
        }
        out
    }

    /// `Vᵀ g` for a vector of length `s`.
    pub fn mul_transpose(&self, g: &[S]) -> Vec<S> {
        assert_eq!(g.len(), self.rows);
        self.columns()
            .map(|col| col.iter().zip(g).map(|(&v, &x)| v * x).sum())
            .collect()
    }

    pub fn cast<T: Scalar>(&self) -> VertexMatrix<T> {
        VertexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| T::of(x.to_f64_lossy())).collect(),
        }
    }
}

pub fn vertex_matrix<S: Scalar>(
    mask: &AdmissibleMask,
    schema: &ConceptSchema,
    budget: u64,
) -> Result<VertexMatrix<S>> {
    let s = schema.marginal_width();
    let d = mask.admissible_count();
    let entries = s as u128 * d as u128;
    if entries > budget as u128 {
        return Err(Error::VertexBudgetExceeded { entries, budget });
    }
    let mut data = vec![S::zero(); s * d];
    let mut col = 0;
    let bits = mask.bits();
    for_each_state(schema, |k, c| {
        if bits[k] {
            for (i, &v) in c.iter().enumerate() {
                data[col * s + schema.flat_index(i, v)] = S::one();
            }
            col += 1;
        }
    });
    Ok(VertexMatrix { rows: s, cols: d, data })
}

/// How one original concept is represented after state-space reduction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConceptReduction {
    /// Not mentioned by any rule; predicted by a separate plain head.
    Untouched,
    /// Every outcome is mentioned; copied unchanged.
    Kept { reduced: usize },
    /// Unmentioned outcomes merged into an artificial 0-outcome, which is
    /// reduced outcome 1; `kept[j]` is the original outcome of reduced
    /// outcome `j + 2`.
    Compressed {
        reduced: usize,
        kept: Vec<usize>,
        replaced: Vec<usize>,
    },
}

/// Per-concept reduction record, indexed by original concept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducedSchemaMap {
    pub concepts: Vec<ConceptReduction>,
}

impl ReducedSchemaMap {
    /// Reduced concept vector for an original one; untouched concepts are dropped.
    pub fn reduce_state(&self, c: &[usize]) -> ConceptVector {
        let mut out = Vec::new();
        for (entry, &v) in self.concepts.iter().zip(c) {
            match entry {
                ConceptReduction::Untouched => {}
                ConceptReduction::Kept { .. } => out.push(v),
                ConceptReduction::Compressed { kept, .. } => {
                    out.push(kept.iter().position(|&o| o == v).map_or(1, |p| p + 2))
                }
            }
        }
        ConceptVector(out)
    }

    /// Reduced outcome sets written with original outcome numbers and 0
    /// for the merged outcome, e.g. `{0,2,4}`; `None` for untouched concepts.
    pub fn outcome_sets(&self, schema: &ConceptSchema) -> Vec<Option<Vec<usize>>> {
        self.concepts
            .iter()
            .enumerate()
            .map(|(i, entry)| match entry {
                ConceptReduction::Untouched => None,
                ConceptReduction::Kept { .. } => Some((1..=schema.outcome_count(i)).collect()),
                ConceptReduction::Compressed { kept, .. } => {
                    Some(std::iter::once(0).chain(kept.iter().copied()).collect())
                }
            })
            .collect()
    }

    pub fn is_identity(&self) -> bool {
        self.concepts
            .iter()
            .enumerate()
            .all(|(i, e)| matches!(e, ConceptReduction::Kept { reduced } if *reduced == i))
    }
}

#[derive(Debug, Clone)]
pub struct Reduction {
    pub schema: ConceptSchema,
    pub map: ReducedSchemaMap,
    pub rule: RuleAst,
}

/// Drops concepts the rule never mentions and merges unmentioned outcomes
/// of partially mentioned concepts into a 0-outcome.
pub fn reduce_schema(ast: &RuleAst, schema: &ConceptSchema) -> Result<Reduction> {
    validate_literals(ast, schema)?;
    let mut mentioned: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); schema.len()];
    ast.for_each_literal(&mut |i, set| mentioned[i].extend(set.iter().copied()));

    let mut entries = Vec::with_capacity(schema.len());
    let mut reduced_concepts = Vec::new();
    for (i, used) in mentioned.iter().enumerate() {
        let concept = schema.concept(i);
        if used.is_empty() {
            entries.push(ConceptReduction::Untouched);
            continue;
        }
        let reduced = reduced_concepts.len();
        if used.len() == concept.outcome_count() {
            entries.push(ConceptReduction::Kept { reduced });
            reduced_concepts.push(concept.clone());
            continue;
        }
        let kept: Vec<usize> = used.iter().copied().collect();
        let replaced: Vec<usize> = (1..=concept.outcome_count())
            .filter(|o| !used.contains(o))
            .collect();
        let mut values = vec![other_value_name(concept)];
        values.extend(kept.iter().map(|&o| concept.values[o - 1].clone()));
        reduced_concepts.push(Concept {
            name: concept.name.clone(),
            values,
        });
        entries.push(ConceptReduction::Compressed {
            reduced,
            kept,
            replaced,
        });
    }

    let rule = ast.map_literals(&mut |i, set| match &entries[i] {
        ConceptReduction::Kept { reduced } => RuleAst::Literal(*reduced, set.clone()),
        ConceptReduction::Compressed { reduced, kept, .. } => RuleAst::Literal(
            *reduced,
            set.iter()
                .map(|o| kept.iter().position(|k| k == o).expect("mentioned outcome") + 2)
                .collect(),
        ),
        ConceptReduction::Untouched => unreachable!("literal on an unmentioned concept"),
    });

    Ok(Reduction {
        schema: ConceptSchema::new(reduced_concepts)?,
        map: ReducedSchemaMap { concepts: entries },
        rule,
    })
}

fn other_value_name(concept: &Concept) -> String {
    let mut name = String::from("other");
    while concept.values.contains(&name) {
        name.push('_');
    }
    name
}

/// Expands marginals over the reduced schema back to the original schema.
///
/// `side[i]` supplies what the reduced head cannot: for an untouched concept
/// its full outcome distribution; for a compressed concept the distribution
/// over its replaced outcomes (in `replaced` order); ignored otherwise.
pub fn expand_compressed_marginals<S: Scalar>(
    original: &ConceptSchema,
    reduced: &ConceptSchema,
    map: &ReducedSchemaMap,
    compressed: &[S],
    side: &[Vec<S>],
) -> Result<MarginalVector<S>> {
    if compressed.len() != reduced.marginal_width() {
        return Err(Error::Dimension(format!(
            "compressed marginals have {} entries, reduced schema needs {}",
            compressed.len(),
            reduced.marginal_width()
        )));
    }
    let mut out = MarginalVector::zeros(original.marginal_width());
    let p = out.as_mut_slice();
    for (i, entry) in map.concepts.iter().enumerate() {
        let block = original.block(i);
        match entry {
            ConceptReduction::Untouched => {
                let dist = side.get(i).filter(|d| d.len() == block.len()).ok_or_else(|| {
                    Error::Dimension(format!("missing distribution for untouched concept {i}"))
                })?;
                p[block].copy_from_slice(dist);
            }
            ConceptReduction::Kept { reduced: r } => {
                p[block].copy_from_slice(&compressed[reduced.block(*r)]);
            }
            ConceptReduction::Compressed {
                reduced: r,
                kept,
                replaced,
            } => {
                let comp = &compressed[reduced.block(*r)];
                let dist = side.get(i).filter(|d| d.len() == replaced.len()).ok_or_else(|| {
                    Error::Dimension(format!("missing replacement distribution for concept {i}"))
                })?;
                for (&o, &q) in replaced.iter().zip(dist) {
                    p[block.start + o - 1] = comp[0] * q;
                }
                for (j, &o) in kept.iter().enumerate() {
                    p[block.start + o - 1] = comp[j + 1];
                }
            }
        }
    }
    Ok(out)
}
