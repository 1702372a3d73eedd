//! Working scalar abstraction.
//!
//! Every numerical routine in this crate is generic over [`Scalar`], which is
//! satisfied by `f32` and `f64`. Persistence always goes through `f64`, so
//! models written by an `f32` build load fine in an `f64` build and vice versa.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable in all numerical routines.
pub trait Scalar: RealField + FromPrimitive + ToPrimitive + Copy + Send + Sync {}

impl<T> Scalar for T where T: RealField + FromPrimitive + ToPrimitive + Copy + Send + Sync {}

/// Converts an `f64` constant into the working scalar.
///
/// Panics only if `T` cannot represent any finite `f64` at all, which no
/// implementor of [`Scalar`] in practice triggers (f32 saturates via `as`
/// semantics inside `from_f64` only for overflow; constants used in this
/// crate are all well inside f32 range).
#[inline]
pub fn real<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant must convert to the working scalar")
}

/// Converts the working scalar into `f64` (exact for f32/f64).
#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().expect("working scalar must convert to f64")
}
