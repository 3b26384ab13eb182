//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Only meant for verification-sized problems (a few hundred variables).
//! Generic over the field so the same code runs in `f64` and in exact
//! rational arithmetic.

use std::fmt::Debug;
use std::ops::Neg;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Num, Zero};

use super::system::InequalitySystem;
use crate::error::{Error, Result};

/// Ordered field usable by the simplex solver.
pub trait LpScalar: Clone + PartialOrd + Num + Neg<Output = Self> + Debug {
    /// Values within `±tolerance` are treated as zero (zero for exact types).
    fn tolerance() -> Self;

    fn from_i64(v: i64) -> Self;

    fn is_positive_tol(&self) -> bool {
        *self > Self::tolerance()
    }

    fn is_negative_tol(&self) -> bool {
        *self < -Self::tolerance()
    }
}

impl LpScalar for f64 {
    fn tolerance() -> Self {
        1e-11
    }

    fn from_i64(v: i64) -> Self {
        v as f64
    }
}

impl LpScalar for f32 {
    fn tolerance() -> Self {
        1e-5
    }

    fn from_i64(v: i64) -> Self {
        v as f32
    }
}

impl LpScalar for BigRational {
    fn tolerance() -> Self {
        Self::zero()
    }

    fn from_i64(v: i64) -> Self {
        Ratio::from_integer(BigInt::from(v))
    }
}

/// Optimal value and an optimal vertex of an LP.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<F> {
    pub value: F,
    pub point: Vec<F>,
}

struct Tableau<F> {
    /// `rows × (cols + 1)`, last column is the right-hand side.
    cells: Vec<Vec<F>>,
    basis: Vec<usize>,
    cols: usize,
}

impl<F: LpScalar> Tableau<F> {
    fn rhs(&self, r: usize) -> &F {
        &self.cells[r][self.cols]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.cells[row][col].clone();
        for x in self.cells[row].iter_mut() {
            *x = x.clone() / p.clone();
        }
        let pivot_row = self.cells[row].clone();
        for (r, cells) in self.cells.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let factor = cells[col].clone();
            if factor.is_zero() {
                continue;
            }
            for (x, pr) in cells.iter_mut().zip(&pivot_row) {
                *x = x.clone() - factor.clone() * pr.clone();
            }
        }
        self.basis[row] = col;
    }

    /// Reduced costs `c_B B⁻¹ A_j − c_j` for a maximization objective.
    fn reduced_costs(&self, cost: &[F]) -> Vec<F> {
        (0..self.cols)
            .map(|j| {
                let mut z = F::zero();
                for (r, &b) in self.basis.iter().enumerate() {
                    if !cost[b].is_zero() {
                        z = z + cost[b].clone() * self.cells[r][j].clone();
                    }
                }
                z - cost[j].clone()
            })
            .collect()
    }

    /// Maximizes `cost · x` over the current feasible basis using Bland's
    /// rule. Columns with `allowed[j] == false` never enter.
    fn optimize(&mut self, cost: &[F], allowed: &[bool]) -> Result<()> {
        let max_iterations = 50_000;
        for _ in 0..max_iterations {
            let reduced = self.reduced_costs(cost);
            let Some(enter) = (0..self.cols).find(|&j| allowed[j] && reduced[j].is_negative_tol())
            else {
                return Ok(());
            };
            let mut leave: Option<(usize, F)> = None;
            for r in 0..self.cells.len() {
                let a = &self.cells[r][enter];
                if !a.is_positive_tol() {
                    continue;
                }
                let ratio = self.rhs(r).clone() / a.clone();
                let better = match &leave {
                    None => true,
                    Some((best_r, best)) => {
                        ratio < *best || (ratio == *best && self.basis[r] < self.basis[*best_r])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
            let Some((row, _)) = leave else {
                return Err(Error::Unbounded);
            };
            self.pivot(row, enter);
        }
        Err(Error::Unbounded)
    }
}

/// Maximizes `objective · p` over `{p : A p ≥ b, Q p = 1}`.
pub fn lp_max<F: LpScalar>(sys: &InequalitySystem, objective: &[F]) -> Result<LpSolution<F>> {
    let s = sys.width();
    if objective.len() != s {
        return Err(Error::Dimension(format!(
            "objective has {} entries, system width is {s}",
            objective.len()
        )));
    }
    let clauses = sys.clause_count();
    let blocks = sys.blocks();
    let rows = clauses + blocks;
    // columns: p (s) | surplus (clauses) | artificial (rows)
    let structural = s + clauses;
    let cols = structural + rows;

    let mut cells = vec![vec![F::zero(); cols + 1]; rows];
    for (r, idx) in sys.clause_rows.iter().enumerate() {
        for &j in idx {
            cells[r][j] = F::one();
        }
        cells[r][s + r] = -F::one();
        cells[r][cols] = F::one();
    }
    for i in 0..blocks {
        let r = clauses + i;
        for j in sys.block(i) {
            cells[r][j] = F::one();
        }
        cells[r][cols] = F::one();
    }
    for (r, row) in cells.iter_mut().enumerate() {
        row[structural + r] = F::one();
    }
    let mut tab = Tableau {
        cells,
        basis: (structural..cols).collect(),
        cols,
    };

    // phase 1: maximize −Σ artificials
    let mut phase1 = vec![F::zero(); cols];
    for c in phase1.iter_mut().skip(structural) {
        *c = -F::one();
    }
    tab.optimize(&phase1, &vec![true; cols])?;
    let infeasibility = tab
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &b)| b >= structural)
        .fold(F::zero(), |acc, (r, _)| acc + tab.rhs(r).clone());
    if infeasibility.is_positive_tol() {
        return Err(Error::Infeasible);
    }

    // drive zero-valued artificials out of the basis; drop redundant rows
    let mut r = 0;
    while r < tab.cells.len() {
        if tab.basis[r] >= structural {
            let nonzero = |v: &F| v.is_positive_tol() || v.is_negative_tol();
            match (0..structural).find(|&j| nonzero(&tab.cells[r][j])) {
                Some(j) => tab.pivot(r, j),
                None => {
                    tab.cells.remove(r);
                    tab.basis.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }

    let mut cost = vec![F::zero(); cols];
    cost[..s].clone_from_slice(objective);
    let allowed: Vec<bool> = (0..cols).map(|j| j < structural).collect();
    tab.optimize(&cost, &allowed)?;

    let mut point = vec![F::zero(); s];
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < s {
            point[b] = tab.rhs(r).clone();
        }
    }
    let value = point
        .iter()
        .zip(objective)
        .fold(F::zero(), |acc, (x, c)| acc + x.clone() * c.clone());
    Ok(LpSolution { value, point })
}

/// Converts an `f64` to an exact rational (every finite double is one).
pub fn rational_from_f64(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite value")
}
