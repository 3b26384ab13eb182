use serde::{Deserialize, Serialize};

use crate::logic::Cnf;
use crate::scalar::Scalar;
use crate::schema::ConceptSchema;

/// H-representation of the feasible marginals:
///
/// ```text
/// Â p ≥ 1      one row per clause, ones at the clause's literals
/// I p ≥ 0
/// Q p = 1      one row per concept block
/// ```
///
/// `A = [Â; I]` and `b = [1; 0]`. Rows of `Â` are stored sparsely as the
/// flat indices where they hold a one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InequalitySystem {
    /// Start of each concept block plus the total width `s` at the end.
    pub offsets: Vec<usize>,
    pub clause_rows: Vec<Vec<usize>>,
}

/// One row of `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Row<'a> {
    Clause(&'a [usize]),
    Bound(usize),
}

impl Row<'_> {
    pub fn dot<S: Scalar>(&self, x: &[S]) -> S {
        match *self {
            Row::Clause(idx) => idx.iter().map(|&j| x[j]).sum(),
            Row::Bound(j) => x[j],
        }
    }

    pub fn rhs<S: Scalar>(&self) -> S {
        match self {
            Row::Clause(_) => S::one(),
            Row::Bound(_) => S::zero(),
        }
    }

    /// Adds `scale * a_r` into `out`.
    pub fn axpy<S: Scalar>(&self, scale: S, out: &mut [S]) {
        match *self {
            Row::Clause(idx) => {
                for &j in idx {
                    out[j] = out[j] + scale;
                }
            }
            Row::Bound(j) => out[j] = out[j] + scale,
        }
    }
}

pub fn clauses_to_inequalities(cnf: &Cnf, schema: &ConceptSchema) -> InequalitySystem {
    let offsets = (0..schema.len())
        .map(|i| schema.block(i).start)
        .chain(std::iter::once(schema.marginal_width()))
        .collect();
    let clause_rows = cnf
        .clauses
        .iter()
        .map(|k| k.literals().map(|(i, j)| schema.flat_index(i, j)).collect())
        .collect();
    InequalitySystem {
        offsets,
        clause_rows,
    }
}

impl InequalitySystem {
    /// Marginal width `s`.
    pub fn width(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Number of concept blocks (rows of `Q`).
    pub fn blocks(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Number of clause rows `b`.
    pub fn clause_count(&self) -> usize {
        self.clause_rows.len()
    }

    /// All rows of `A`: clause rows first, then the `s` bound rows.
    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.clause_rows
            .iter()
            .map(|r| Row::Clause(r.as_slice()))
            .chain((0..self.width()).map(Row::Bound))
    }

    pub fn row_count(&self) -> usize {
        self.clause_rows.len() + self.width()
    }

    /// Dense `Â` with 0/1 entries.
    pub fn dense_clause_matrix(&self) -> Vec<Vec<u8>> {
        self.clause_rows
            .iter()
            .map(|idx| {
                let mut row = vec![0u8; self.width()];
                for &j in idx {
                    row[j] = 1;
                }
                row
            })
            .collect()
    }

    /// Dense block-ones matrix `Q`.
    pub fn dense_block_matrix(&self) -> Vec<Vec<u8>> {
        (0..self.blocks())
            .map(|i| {
                let mut row = vec![0u8; self.width()];
                for j in self.block(i) {
                    row[j] = 1;
                }
                row
            })
            .collect()
    }

    /// `A p − b` for every row.
    pub fn slacks<S: Scalar>(&self, p: &[S]) -> Vec<S> {
        self.rows().map(|r| r.dot(p) - r.rhs::<S>()).collect()
    }

    /// `A p ≥ b − tol` and `|Q p − 1| ≤ tol`.
    pub fn contains<S: Scalar>(&self, p: &[S], tol: S) -> bool {
        if p.len() != self.width() {
            return false;
        }
        let blocks_ok = (0..self.blocks()).all(|i| {
            let sum: S = p[self.block(i)].iter().copied().sum();
            (sum - S::one()).abs() <= tol
        });
        blocks_ok && self.rows().all(|r| r.dot(p) >= r.rhs::<S>() - tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{compile_cnf, Clause};
    use crate::rules::parse_rules;
    use crate::schema::fixtures::woodpecker;

    fn woodpecker_system() -> InequalitySystem {
        let w = woodpecker();
        let rule = parse_rules(
            "IF head = red AND bill IN {dagger, allpurpose} THEN bird = rhw",
            &w,
        )
        .unwrap();
        clauses_to_inequalities(&compile_cnf(&rule, &w, 100).unwrap(), &w)
    }

    #[test]
    fn woodpecker_clause_row() {
        let sys = woodpecker_system();
        assert_eq!(sys.dense_clause_matrix(), vec![vec![1, 0, 0, 1, 1, 0, 0]]);
        assert_eq!(
            sys.dense_block_matrix(),
            vec![
                vec![1, 1, 0, 0, 0, 0, 0],
                vec![0, 0, 1, 1, 0, 0, 0],
                vec![0, 0, 0, 0, 1, 1, 1]
            ]
        );
        assert_eq!(sys.row_count(), 8);
    }

    #[test]
    fn membership() {
        let sys = woodpecker_system();
        assert!(sys.contains(&[0.6, 0.4, 0.4, 0.6, 0.4, 0.3, 0.3], 1e-9));
        // state 8 = (2,1,2)
        assert!(!sys.contains(&[0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0], 1e-9));
        assert!(!sys.contains(&[0.6, 0.4, 0.4, 0.6, 0.4, 0.3], 1e-9));
        assert!(!sys.contains(&[0.7, 0.4, 0.4, 0.6, 0.4, 0.3, 0.3], 1e-9));
    }

    #[test]
    fn singleton_clause_pins_block() {
        let w = woodpecker();
        let sys = clauses_to_inequalities(&Cnf::new(vec![Clause::new([(0, 1)])]), &w);
        assert_eq!(sys.clause_rows, vec![vec![0]]);
        assert!(!sys.contains(&[0.9, 0.1, 0.5, 0.5, 1.0, 0.0, 0.0], 1e-9));
        assert!(sys.contains(&[1.0, 0.0, 0.5, 0.5, 1.0, 0.0, 0.0], 1e-9));
    }

    #[test]
    fn empty_cnf_gives_simplex_only() {
        let w = woodpecker();
        let sys = clauses_to_inequalities(&Cnf::default(), &w);
        assert_eq!(sys.clause_count(), 0);
        assert!(sys.contains(&[0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0], 1e-12));
    }
}
