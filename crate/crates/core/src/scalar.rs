//! Scalar abstraction: the whole engine is generic over the floating-point
//! type through [`Real`], with `f64` as the default throughout the CLI.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Log-domain stand-in for `log 0` on forbidden or zero-probability entries.
///
/// Every log-domain table in the crate is clamped from below at this value,
/// so no table ever contains `-inf` or NaN.
pub const LOG_FLOOR: f64 = -1.0e6;

/// Floating-point scalar usable by every table and backup rule in the crate.
///
/// Implemented for `f32` and `f64` via the blanket impl.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Send + Sync + fmt::Debug + fmt::Display + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant must convert into the scalar type")
    }

    /// Widening conversion for reporting and serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar must convert into f64")
    }

    /// The log-domain floor as a scalar of this type.
    fn log_floor() -> Self {
        Self::of(LOG_FLOOR)
    }

    /// Tolerance for "sums to one" checks: `1e-12`, widened for types whose
    /// epsilon cannot resolve it (`f32`).
    fn one_sum_tol() -> Self {
        Self::of(1e-12).max(Self::epsilon() * Self::of(100.0))
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Send
        + Sync
        + fmt::Debug
        + fmt::Display
        + 'static
{
}

/// Clamps a log-domain value to the floor, mapping `-inf`/NaN to the floor.
pub fn clamp_log<F: Real>(x: F) -> F {
    if x.is_nan() {
        return F::log_floor();
    }
    x.max(F::log_floor())
}
