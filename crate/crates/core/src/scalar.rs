//! Scalar abstraction for the numerical core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the graph, solver and forecaster are written against.
///
/// Implemented for `f32` and `f64`. `Display` must print a representation
/// that parses back to the identical value, which holds for both.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + std::str::FromStr
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal or data value.
    fn of(x: f64) -> Self;

    /// Widening conversion used by metrics and file output.
    fn as_f64(self) -> f64;

    /// Tolerance for "sums to one" style checks at this precision.
    fn simplex_tol(len: usize) -> Self {
        let floor = Self::of(1e-12);
        let scaled = Self::epsilon() * Self::of(4.0 * len.max(1) as f64);
        if scaled > floor {
            scaled
        } else {
            floor
        }
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

/// Componentwise dot product.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Infinity norm, zero for an empty slice.
pub fn norm_inf<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}
