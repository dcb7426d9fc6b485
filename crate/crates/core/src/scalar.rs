//! Floating-point scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar type the algorithms are generic over: `f32` or `f64`.
///
/// The associated tolerances are the numerical slacks used by the gram
/// engine and the environment validators. They are tight for `f64` and
/// relaxed for `f32` so that single precision remains usable.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Slack on the `‖φ‖₂ ≤ 1` feature precondition.
    const FEATURE_NORM_TOL: f64;
    /// Max-entry deviation of `Λ·Λ⁻¹` from identity before a refresh is forced.
    const INVERSE_DRIFT_TOL: f64;
    /// Slack on transition rows summing to one.
    const PROBABILITY_TOL: f64;

    /// Converts an `f64` literal; every finite `f64` is representable (possibly rounded).
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal converts to scalar")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to scalar")
    }
}

impl Scalar for f64 {
    const FEATURE_NORM_TOL: f64 = 1e-9;
    const INVERSE_DRIFT_TOL: f64 = 1e-8;
    const PROBABILITY_TOL: f64 = 1e-12;
}

impl Scalar for f32 {
    const FEATURE_NORM_TOL: f64 = 1e-6;
    const INVERSE_DRIFT_TOL: f64 = 1e-4;
    const PROBABILITY_TOL: f64 = 1e-5;
}
