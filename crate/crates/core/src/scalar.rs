//! Scalar abstraction shared by every numerical module.
//!
//! All numerical kernels are written against [`Real`], which is implemented
//! for `f32` and `f64`. The `f64` instantiations are re-exported under short
//! names at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts a count into `Self`.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// Machine-epsilon scaled tolerance used for near-zero tests.
    #[inline]
    fn tiny() -> Self {
        Self::epsilon() * Self::lit(16.0)
    }
}

impl Real for f32 {}
impl Real for f64 {}
