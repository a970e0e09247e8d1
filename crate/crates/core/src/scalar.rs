//! Floating point scalar abstraction shared by the tensor, model and training code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the whole numeric stack is generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Tag written into checkpoints.
    const DTYPE: &'static str;

    /// Additive logit offset for masked attention positions.
    const MASK_FILL: Self;

    fn from_f64_lossy(x: f64) -> Self;

    fn to_f64_lossless(self) -> f64;

    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64_lossy(x)
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const MASK_FILL: Self = -1e30;

    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const MASK_FILL: Self = -1e30;

    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self
    }
}
