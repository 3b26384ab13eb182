//! Concept schemas, concept vectors and the flat marginal layout.
//!
//! Outcomes are 1-based everywhere in the public API and in file formats;
//! flat marginal indices are 0-based. The marginal vector is concept-major:
//! `[p(0)_1 .. p(0)_n0 | p(1)_1 .. | ... ]`.

use std::collections::HashSet;
use std::ops::{Deref, Index, Range};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub name: String,
    pub values: Vec<String>,
}

impl Concept {
    pub fn new(name: impl Into<String>, values: &[&str]) -> Self {
        Self {
            name: name.into(),
            values: values.iter().map(|v| v.to_string()).collect(),
        }
    }

    pub fn outcome_count(&self) -> usize {
        self.values.len()
    }

    /// 1-based outcome index of a value name.
    pub fn outcome_of(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value).map(|p| p + 1)
    }
}

/// Ordered list of categorical concepts. Concept 0 is the prediction target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaFile", into = "SchemaFile")]
pub struct ConceptSchema {
    concepts: Vec<Concept>,
    offsets: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    concepts: Vec<Concept>,
}

impl TryFrom<SchemaFile> for ConceptSchema {
    type Error = Error;

    fn try_from(file: SchemaFile) -> Result<Self> {
        ConceptSchema::new(file.concepts)
    }
}

impl From<ConceptSchema> for SchemaFile {
    fn from(schema: ConceptSchema) -> Self {
        SchemaFile {
            concepts: schema.concepts,
        }
    }
}

impl ConceptSchema {
    /// Validates outcome counts and name uniqueness. An empty concept list is
    /// allowed (it arises from state-space reduction of a rule that mentions
    /// nothing) but [`ConceptSchema::from_json`] rejects it.
    pub fn new(concepts: Vec<Concept>) -> Result<Self> {
        let mut names = HashSet::new();
        for c in &concepts {
            if c.values.len() < 2 {
                return Err(Error::Schema(format!(
                    "concept `{}` needs at least 2 outcomes, has {}",
                    c.name,
                    c.values.len()
                )));
            }
            if !names.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate concept name `{}`", c.name)));
            }
            let mut values = HashSet::new();
            for v in &c.values {
                if !values.insert(v.as_str()) {
                    return Err(Error::Schema(format!(
                        "duplicate value `{v}` in concept `{}`",
                        c.name
                    )));
                }
            }
        }
        let mut offsets = Vec::with_capacity(concepts.len() + 1);
        let mut acc = 0;
        for c in &concepts {
            offsets.push(acc);
            acc += c.values.len();
        }
        offsets.push(acc);
        Ok(Self { concepts, offsets })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: ConceptSchema = serde_json::from_str(text)?;
        if schema.is_empty() {
            return Err(Error::Schema("schema has no concepts".into()));
        }
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn concept(&self, i: usize) -> &Concept {
        &self.concepts[i]
    }

    /// Number of concepts, `m + 1`.
    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn outcome_count(&self, i: usize) -> usize {
        self.concepts[i].values.len()
    }

    pub fn outcome_counts(&self) -> Vec<usize> {
        self.concepts.iter().map(|c| c.values.len()).collect()
    }

    pub fn concept_index(&self, name: &str) -> Option<usize> {
        self.concepts.iter().position(|c| c.name == name)
    }

    /// Flat index of `p(i)_1` in the marginal vector.
    pub fn block_offset(&self, i: usize) -> Result<usize> {
        if i >= self.concepts.len() {
            return Err(Error::ConceptIndex {
                index: i,
                count: self.concepts.len(),
            });
        }
        Ok(self.offsets[i])
    }

    /// Flat index range of concept `i`'s block. Panics on a bad index.
    pub fn block(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Flat index of literal `(concept, outcome)` with a 1-based outcome.
    pub fn flat_index(&self, concept: usize, outcome: usize) -> usize {
        debug_assert!(outcome >= 1 && outcome <= self.outcome_count(concept));
        self.offsets[concept] + outcome - 1
    }

    /// Length `s` of the marginal vector.
    pub fn marginal_width(&self) -> usize {
        self.offsets[self.concepts.len()]
    }

    /// Total number of joint states, or `None` if it does not fit in 64 bits.
    pub fn total_states(&self) -> Option<u64> {
        self.concepts
            .iter()
            .try_fold(1u64, |acc, c| acc.checked_mul(c.values.len() as u64))
    }

    /// Exact joint state count, even beyond 64 bits, for diagnostics.
    pub fn total_states_wide(&self) -> u128 {
        self.concepts
            .iter()
            .fold(1u128, |acc, c| acc.saturating_mul(c.values.len() as u128))
    }

    pub fn check_vector(&self, c: &ConceptVector) -> Result<()> {
        if c.len() != self.len() {
            return Err(Error::Dimension(format!(
                "concept vector has {} entries, schema has {} concepts",
                c.len(),
                self.len()
            )));
        }
        for (i, &v) in c.iter().enumerate() {
            if v == 0 || v > self.outcome_count(i) {
                return Err(Error::Dimension(format!(
                    "outcome {v} out of range 1..={} for concept `{}`",
                    self.outcome_count(i),
                    self.concepts[i].name
                )));
            }
        }
        Ok(())
    }
}

/// One outcome per concept, 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConceptVector(pub Vec<usize>);

impl ConceptVector {
    pub fn new(values: Vec<usize>) -> Self {
        Self(values)
    }
}

impl Deref for ConceptVector {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for ConceptVector {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Concatenated per-concept outcome distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalVector<S> {
    entries: Vec<S>,
}

impl<S: Scalar> MarginalVector<S> {
    pub fn from_vec(entries: Vec<S>) -> Self {
        Self { entries }
    }

    pub fn zeros(width: usize) -> Self {
        Self {
            entries: vec![S::zero(); width],
        }
    }

    pub fn as_slice(&self) -> &[S] {
        &self.entries
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.entries
    }

    pub fn into_vec(self) -> Vec<S> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn concept_block<'a>(&'a self, schema: &ConceptSchema, i: usize) -> &'a [S] {
        &self.entries[schema.block(i)]
    }

    /// Largest deviation of a block sum from 1 and the smallest entry.
    pub fn simplex_violation(&self, schema: &ConceptSchema) -> (S, S) {
        let mut worst = S::zero();
        for i in 0..schema.len() {
            let sum: S = self.concept_block(schema, i).iter().copied().sum();
            worst = worst.max((sum - S::one()).abs());
        }
        let min = self
            .entries
            .iter()
            .copied()
            .fold(S::infinity(), S::min);
        (worst, min)
    }

    /// Block sums within `tol` of 1 and no entry below `-tol`.
    pub fn is_valid(&self, schema: &ConceptSchema, tol: S) -> bool {
        if self.entries.len() != schema.marginal_width() {
            return false;
        }
        let (dev, min) = self.simplex_violation(schema);
        dev <= tol && min >= -tol
    }

    /// 1-based argmax outcome of each block.
    pub fn argmax_outcomes(&self, schema: &ConceptSchema) -> Vec<usize> {
        (0..schema.len())
            .map(|i| argmax(self.concept_block(schema, i)) + 1)
            .collect()
    }
}

impl<S> Index<usize> for MarginalVector<S> {
    type Output = S;

    fn index(&self, i: usize) -> &S {
        &self.entries[i]
    }
}

/// Index of the first maximal entry.
pub fn argmax<S: PartialOrd + Copy>(xs: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
