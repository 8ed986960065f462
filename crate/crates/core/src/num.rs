//! Scalar abstraction for the numeric core.
//!
//! All probability and distance math in this crate is generic over [`Real`],
//! which is satisfied by `f32` and `f64`. The crate root exposes `f64`-backed
//! aliases for the common pipeline; instantiate the generic types directly if
//! you want the single-precision lane.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};
use std::fmt::{Debug, Display};

/// Floating-point scalar the pipeline computes with (`f32` or `f64`).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("f64 value must be representable in the scalar type")
    }

    fn cast_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize value must be representable in the scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}

/// Tolerance for checking that a probability row of `len` entries sums to 1.
///
/// 1e-9 for `f64` (the contract the double-precision pipeline is tested
/// against); widened proportionally to the type's epsilon so that `f32`
/// models fitted from exact counts still validate.
pub fn stochastic_tolerance<R: Real>(len: usize) -> R {
    let floor = R::cast(1e-9);
    let eps_based = R::epsilon() * R::cast_usize(len.max(16)) * R::cast(16.0);
    if eps_based > floor {
        eps_based
    } else {
        floor
    }
}

/// Checks that `row` is a probability distribution: entries in [0, 1] and
/// summing to 1 within [`stochastic_tolerance`].
pub fn is_stochastic_row<R: Real>(row: &[R]) -> bool {
    if row.is_empty() {
        return false;
    }
    let tol = stochastic_tolerance::<R>(row.len());
    let one = R::one();
    let mut sum = R::zero();
    for &p in row {
        if !(p >= R::zero() && p <= one + tol) {
            return false;
        }
        sum = sum + p;
    }
    (sum - one).abs() <= tol
}
