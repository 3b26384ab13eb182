//! Per-concept accuracy and macro-F1 over labeled entries.

use serde::{Deserialize, Serialize};

use crate::data::UNLABELED;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptMetrics {
    pub concept: usize,
    pub name: String,
    /// Number of labeled entries scored.
    pub support: usize,
    pub accuracy: f64,
    pub f1: f64,
}

/// Fraction of labeled entries predicted correctly; `None` if none labeled.
pub fn accuracy(truth: &[i32], predicted: &[usize]) -> Option<f64> {
    let mut hits = 0;
    let mut total = 0;
    for (&t, &p) in truth.iter().zip(predicted) {
        if t != UNLABELED {
            total += 1;
            hits += usize::from(t as usize == p);
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

/// F1 averaged over every outcome that occurs among the labeled truths or
/// their predictions; `None` if nothing is labeled.
pub fn macro_f1(truth: &[i32], predicted: &[usize]) -> Option<f64> {
    use std::collections::BTreeMap;
    // outcome -> (tp, fp, fn)
    let mut counts: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(predicted) {
        if t == UNLABELED {
            continue;
        }
        let t = t as usize;
        if t == p {
            counts.entry(t).or_default().0 += 1;
        } else {
            counts.entry(p).or_default().1 += 1;
            counts.entry(t).or_default().2 += 1;
        }
    }
    if counts.is_empty() {
        return None;
    }
    let sum: f64 = counts
        .values()
        .map(|&(tp, fp, fn_)| 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
        .sum();
    Some(sum / counts.len() as f64)
}
