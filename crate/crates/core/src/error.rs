use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("concept index {index} out of range (schema has {count} concepts)")]
    ConceptIndex { index: usize, count: usize },

    #[error("joint state {index} out of range 1..={total}")]
    StateIndex { index: u64, total: u64 },

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown concept `{name}` at line {line}, column {column}")]
    UnknownConcept {
        name: String,
        line: usize,
        column: usize,
    },

    #[error("unknown value `{value}` for concept `{concept}` at line {line}, column {column}")]
    UnknownValue {
        concept: String,
        value: String,
        line: usize,
        column: usize,
    },

    #[error("empty value set at line {line}, column {column}")]
    EmptyValueSet { line: usize, column: usize },

    #[error("invalid rule: {0}")]
    InvalidRule(String),

    #[error("UnsatisfiableRule: no concept assignment satisfies the rules")]
    UnsatisfiableRule,

    #[error("CnfExplosion: CNF conversion exceeded the clause budget of {budget}; use the admissible-state or vertex head instead")]
    CnfExplosion { budget: usize },

    #[error("EnumerationBudgetExceeded: {states} joint states exceed the budget of {budget}; reduce the schema or use the constraints head")]
    EnumerationBudgetExceeded { states: u128, budget: u64 },

    #[error("vertex matrix of {entries} entries exceeds the budget of {budget}")]
    VertexBudgetExceeded { entries: u128, budget: u64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("IDX file {path}: {message}")]
    Idx { path: PathBuf, message: String },

    #[error("artifact: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
