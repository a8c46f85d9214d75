//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the assimilation algorithms (`f32` or `f64`).
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync + 'static {}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync + 'static {}

/// Converts an `f64` literal into the working scalar type.
#[inline]
pub fn lit<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("f64 literal representable in scalar type")
}

/// Lossy conversion back to `f64`, used for reporting.
#[inline]
pub fn to_f64<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

pub(crate) fn all_finite<T: Real>(v: &nalgebra::DVector<T>) -> bool {
    v.iter().all(|x| x.is_finite())
}
