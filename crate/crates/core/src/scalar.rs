//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable for marginals, heads and training: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for constants.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerically stable softmax written into `out`.
pub fn softmax_into<S: Scalar>(logits: &[S], out: &mut [S]) {
    debug_assert_eq!(logits.len(), out.len());
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let mut total = S::zero();
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        total = total + *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
}

pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); logits.len()];
    softmax_into(logits, &mut out);
    out
}

/// Vector-Jacobian product of softmax: `probs ⊙ (g − ⟨probs, g⟩)`.
pub fn softmax_vjp<S: Scalar>(probs: &[S], cotangent: &[S]) -> Vec<S> {
    let dot: S = probs.iter().zip(cotangent).map(|(&p, &g)| p * g).sum();
    probs
        .iter()
        .zip(cotangent)
        .map(|(&p, &g)| p * (g - dot))
        .collect()
}

pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}
