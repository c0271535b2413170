//! Floating-point abstraction shared by the numeric modules.
//!
//! Training, loss and evaluation code is written once against [`Scalar`] and
//! instantiated for `f32` and `f64`. Feature payloads stay `f32` on disk and are
//! widened (or passed through) at the point of use.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// floating point: f32 or f64
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from a literal or an `f64` intermediate.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 is representable in every Scalar")
    }

    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("usize is representable in every Scalar")
    }

    fn of_f32(value: f32) -> Self;

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {
    fn of_f32(value: f32) -> Self {
        value
    }
}

impl Scalar for f64 {
    fn of_f32(value: f32) -> Self {
        f64::from(value)
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable `ln(sum(exp(values)))`.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = values.iter().map(|v| (*v - max).exp()).sum();
    max + sum.ln()
}
