//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the library computes in: `f32` or `f64`.
///
/// Tolerances are expressed as `f64` literals and converted with [`Scalar::lit`],
/// so an `f32` instantiation works but certifies far less than an `f64` one.
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
    + 'static
{
    /// Converts an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Converts a count.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `x^k` for a non-negative integer exponent.
pub(crate) fn powu<T: Scalar>(x: T, k: u32) -> T {
    x.powi(k as i32)
}

/// Ratio with the conventions `0/0 = 1` and `x/0 = +inf` for `x > 0`.
pub fn cost_ratio<T: Scalar>(num: T, den: T) -> T {
    if den > T::zero() {
        num / den
    } else if num > T::zero() {
        T::infinity()
    } else {
        T::one()
    }
}
