//! Scalar abstraction for the numeric kernels.
//!
//! All matrix code is generic over [`Scalar`] so the same kernels run in
//! f32 or f64. The f64 instantiation is the default everywhere (see the
//! aliases at the crate root).

use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type usable by every numeric kernel in this crate.
pub trait Scalar:
    nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default + std::iter::Sum<Self>
{
    /// Lossy conversion from f64. Panics only for non-representable values,
    /// which cannot occur for f32/f64.
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("scalar conversion from f64")
    }

    fn of_usize(v: usize) -> Self {
        // usize -> f64 -> S keeps us exact for the magnitudes we use
        // (node counts and volumes far below 2^52).
        Self::of(v as f64)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar conversion to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
