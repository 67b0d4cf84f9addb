//! Floating-point abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used by the model, the greedy solver and the diagnostics.
///
/// Implemented for `f32` and `f64`. Tolerances that only make sense in
/// double precision are floored at a small multiple of machine epsilon so
/// that the same code paths stay meaningful in single precision.
pub trait Scalar:
    Float
    + FromPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts a literal constant. Panics only if the constant is not
    /// representable, which cannot happen for the finite literals used here.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    /// Relative tolerance below which a quantity is treated as zero.
    fn tiny() -> Self {
        let floor = Self::epsilon() * Self::lit(16.0);
        let target = Self::lit(1e-12);
        if target > floor {
            target
        } else {
            floor
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Euclidean norm of a slice.
pub fn norm2<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Inner product of two equal-length slices.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Ordering helper that treats NaN as smaller than every number.
pub(crate) fn greater<T: Scalar>(a: T, b: T) -> bool {
    match (a.is_nan(), b.is_nan()) {
        (true, _) => false,
        (false, true) => true,
        _ => a > b,
    }
}
