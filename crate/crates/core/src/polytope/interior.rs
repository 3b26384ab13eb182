//! Interior point of the marginal polytope and the gated ray map used by the
//! constraints head.
//!
//! The map sends an unconstrained direction to a feasible point: project the
//! direction onto the polytope's affine hull, walk from the interior point
//! along it up to the first facet (`α_max`), and stop at a gated fraction of
//! that distance. Cost per call is `O((b + s) · s)`.

use serde::{Deserialize, Serialize};

use super::system::{InequalitySystem, Row};
use crate::scalar::Scalar;
use crate::state_space::VertexMatrix;

/// Shrink factor keeping outputs strictly off the boundary.
pub const BOUNDARY_MARGIN: f64 = 1e-6;
const DIRECTION_EPS: f64 = 1e-12;
const TIGHT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteriorPoint<S> {
    pub point: Vec<S>,
    /// Flat indices whose value is identical at every vertex.
    pub frozen: Vec<usize>,
}

/// Vertex centroid `V · (1/d, …, 1/d)`; lies in the relative interior.
pub fn interior_point<S: Scalar>(vertices: &VertexMatrix<S>) -> InteriorPoint<S> {
    let d = vertices.cols();
    let weight = S::one() / S::from_usize(d).expect("vertex count fits");
    let mut point = vertices.mul(&vec![weight; d]);
    let frozen: Vec<usize> = (0..vertices.rows())
        .filter(|&r| {
            let first = vertices.get(r, 0);
            (1..d).all(|k| vertices.get(r, k) == first)
        })
        .collect();
    // averaging d equal values can round; keep the exact value
    for &r in &frozen {
        point[r] = vertices.get(r, 0);
    }
    InteriorPoint { point, frozen }
}

/// Precomputed geometry for repeated [`PolytopeMap::map`] calls.
#[derive(Debug, Clone)]
pub struct PolytopeMap<S> {
    system: InequalitySystem,
    origin: InteriorPoint<S>,
    /// Orthonormal basis of the directions the output must not move along.
    normals: Vec<Vec<S>>,
    /// `a_r · x0 − b_r` for each row of `A`.
    slack: Vec<S>,
    /// Rows that are tight at the origin; they hold for every feasible point.
    tight: Vec<bool>,
}

/// Intermediate values of one forward map, enough for the VJP.
#[derive(Debug, Clone)]
struct Trace<S> {
    /// Norm of the projected direction; `None` when it vanished.
    norm: Option<S>,
    unit: Vec<S>,
    alpha: S,
    active_row: usize,
    active_rate: S,
    gate: S,
}

impl<S: Scalar> PolytopeMap<S> {
    pub fn new(system: InequalitySystem, origin: InteriorPoint<S>) -> Self {
        let s = system.width();
        assert_eq!(origin.point.len(), s, "interior point width");
        let slack = system.slacks(&origin.point);
        let tight: Vec<bool> = system
            .rows()
            .zip(&slack)
            .map(|(row, &sl)| match row {
                Row::Clause(_) => sl <= S::of(TIGHT_SLACK),
                Row::Bound(j) => origin.frozen.binary_search(&j).is_ok() || sl <= S::of(TIGHT_SLACK),
            })
            .collect();

        // block sums, frozen coordinates and tight clause rows span the
        // directions that would leave the affine hull
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        for i in 0..system.blocks() {
            let mut q = vec![0.0; s];
            for j in system.block(i) {
                q[j] = 1.0;
            }
            candidates.push(q);
        }
        for (row, &t) in system.rows().zip(&tight) {
            if t {
                let mut a = vec![0.0; s];
                row.axpy(1.0, &mut a);
                candidates.push(a);
            }
        }
        let normals = orthonormalize(candidates)
            .into_iter()
            .map(|v| v.into_iter().map(S::of).collect())
            .collect();

        Self {
            system,
            origin,
            normals,
            slack,
            tight,
        }
    }

    pub fn system(&self) -> &InequalitySystem {
        &self.system
    }

    pub fn origin(&self) -> &InteriorPoint<S> {
        &self.origin
    }

    /// Dimension of the affine hull the map moves in.
    pub fn free_dimension(&self) -> usize {
        self.system.width() - self.normals.len()
    }

    fn project(&self, v: &mut [S]) {
        for q in &self.normals {
            let c: S = q.iter().zip(v.iter()).map(|(&a, &b)| a * b).sum();
            if c != S::zero() {
                for (x, &qa) in v.iter_mut().zip(q) {
                    *x = *x - c * qa;
                }
            }
        }
    }

    fn trace(&self, direction: &[S], gate: S) -> Trace<S> {
        assert_eq!(direction.len(), self.system.width(), "direction width");
        let mut unit = direction.to_vec();
        self.project(&mut unit);
        let norm = unit.iter().map(|&x| x * x).sum::<S>().sqrt();
        let mut trace = Trace {
            norm: None,
            unit,
            alpha: S::zero(),
            active_row: usize::MAX,
            active_rate: S::zero(),
            gate,
        };
        if norm.is_nan() || norm < S::of(DIRECTION_EPS) {
            return trace;
        }
        for x in trace.unit.iter_mut() {
            *x = *x / norm;
        }
        trace.norm = Some(norm);

        let mut best = S::infinity();
        for (r, row) in self.system.rows().enumerate() {
            if self.tight[r] {
                continue;
            }
            let rate = row.dot(&trace.unit);
            if rate < -S::of(DIRECTION_EPS) {
                let step = self.slack[r] / -rate;
                if step < best {
                    best = step;
                    trace.active_row = r;
                    trace.active_rate = rate;
                }
            }
        }
        if best.is_finite() {
            trace.alpha = best;
        } else {
            // unreachable for a bounded polytope; stay put
            trace.norm = None;
        }
        trace
    }

    fn scale(&self, trace: &Trace<S>) -> S {
        trace.gate * (S::one() - S::of(BOUNDARY_MARGIN))
    }

    /// Feasible point `x0 + gate·(1−ε)·α_max·û` for a raw direction and a
    /// gate in `[0, 1]`.
    pub fn map(&self, direction: &[S], gate: S) -> Vec<S> {
        let trace = self.trace(direction, gate);
        let mut out = self.origin.point.clone();
        if trace.norm.is_some() {
            let step = self.scale(&trace) * trace.alpha;
            for (o, &u) in out.iter_mut().zip(&trace.unit) {
                *o = *o + step * u;
            }
        }
        out
    }

    /// Cotangents of `(direction, gate)` given the output cotangent. The
    /// active facet is held fixed, so at ties this is one subgradient.
    pub fn vjp(&self, direction: &[S], gate: S, cotangent: &[S]) -> (Vec<S>, S) {
        let trace = self.trace(direction, gate);
        let s = self.system.width();
        let Some(norm) = trace.norm else {
            return (vec![S::zero(); s], S::zero());
        };
        let gamma = self.scale(&trace);
        let u_dot_g: S = trace.unit.iter().zip(cotangent).map(|(&u, &g)| u * g).sum();

        // x = x0 + γ α(û) û with α = slack / (−a·û)
        // ∂α/∂û = slack · a / (a·û)² = α · a / (−a·û)
        let mut g_unit: Vec<S> = cotangent.iter().map(|&g| gamma * trace.alpha * g).collect();
        let row = self
            .system
            .rows()
            .nth(trace.active_row)
            .expect("active row exists");
        row.axpy(gamma * u_dot_g * trace.alpha / -trace.active_rate, &mut g_unit);

        // û = w / ‖w‖
        let u_dot_gu: S = trace.unit.iter().zip(&g_unit).map(|(&u, &g)| u * g).sum();
        let mut g_dir: Vec<S> = g_unit
            .iter()
            .zip(&trace.unit)
            .map(|(&g, &u)| (g - u * u_dot_gu) / norm)
            .collect();
        // w = P·direction with P a symmetric projector
        self.project(&mut g_dir);

        let g_gate = (S::one() - S::of(BOUNDARY_MARGIN)) * trace.alpha * u_dot_g;
        (g_dir, g_gate)
    }

    /// Relative gap between the smallest and second-smallest facet step,
    /// used to avoid kinks when checking gradients numerically.
    pub fn facet_gap(&self, direction: &[S]) -> Option<S> {
        let trace = self.trace(direction, S::one());
        trace.norm?;
        let mut steps: Vec<S> = self
            .system
            .rows()
            .enumerate()
            .filter(|(r, _)| !self.tight[*r])
            .filter_map(|(r, row)| {
                let rate = row.dot(&trace.unit);
                (rate < -S::of(DIRECTION_EPS)).then(|| self.slack[r] / -rate)
            })
            .collect();
        steps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        match steps.as_slice() {
            [a, b, ..] => Some((*b - *a) / *b),
            _ => Some(S::one()),
        }
    }
}

/// Convenience wrapper building the geometry for a single call.
pub fn map_to_polytope<S: Scalar>(
    direction: &[S],
    gate: S,
    origin: &InteriorPoint<S>,
    system: &InequalitySystem,
) -> Vec<S> {
    PolytopeMap::new(system.clone(), origin.clone()).map(direction, gate)
}

/// Modified Gram–Schmidt with one re-orthogonalization pass; drops
/// dependent vectors.
fn orthonormalize(vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut v in vectors {
        let original: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..2 {
            for q in &basis {
                let c: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (x, qa) in v.iter_mut().zip(q) {
                    *x -= c * qa;
                }
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 * original.max(1.0) {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}
