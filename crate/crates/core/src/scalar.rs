//! Numeric traits the pipeline is generic over.
//!
//! Counting and ranking work over any unsigned primitive integer that
//! implements [`CountInt`]; the crate defaults to `u128` ([`crate::Count`]).
//! Pixel geometry, similarity scores and augmentation parameters work over any
//! [`Scalar`] (`f32` or `f64`); the crate defaults to `f64` ([`crate::Real`]),
//! which is also the precision the pixel-digest contract is defined for.

use num_traits::{CheckedAdd, CheckedMul, CheckedSub, Float, FromPrimitive, PrimInt, ToPrimitive, Unsigned};
use std::fmt::{Debug, Display};
use std::hash::Hash;

/// Floating point type used for rasterization and similarity math.
pub trait Scalar:
    'static + Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync
{
    /// Lossy conversion from an `f64` constant.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant converts to every float type")
    }

    #[inline]
    fn from_u32_lossy(v: u32) -> Self {
        Self::from_u32(v).expect("u32 converts to every float type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Exact unsigned integer type used for combination counts and ranks.
pub trait CountInt:
    'static
    + PrimInt
    + Unsigned
    + CheckedAdd
    + CheckedMul
    + CheckedSub
    + FromPrimitive
    + ToPrimitive
    + Hash
    + Debug
    + Display
    + Send
    + Sync
{
    /// Bit width, reported in overflow errors.
    const BITS: u32;

    #[inline]
    fn from_usize_exact(v: usize) -> Option<Self> {
        Self::from_usize(v)
    }
}

macro_rules! impl_count_int {
    ($($t:ty),*) => {
        $(impl CountInt for $t {
            const BITS: u32 = <$t>::BITS;
        })*
    };
}

impl_count_int!(u32, u64, u128);
