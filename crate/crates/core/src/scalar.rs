//! Scalar abstraction for the numeric kernels.
//!
//! All solvers are generic over [`Scalar`], which bundles the real-field
//! arithmetic required by `nalgebra` with the `num-traits` conversions used
//! for literals, grid indices and report output. `f32` and `f64` are the
//! supported instantiations; the crate root exports `f64` aliases for the
//! common types.

use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type usable by every solver in this crate.
pub trait Scalar:
    nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default + std::iter::Sum<Self>
{
    /// Converts an `f64` literal (tolerances, weights) into `Self`.
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("literal not representable")
    }

    /// Converts a count (grid size, path index) into `Self`.
    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count not representable")
    }

    /// Lossy view as `f64`, used for reports and serialized output.
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar convertible to f64")
    }

    /// True when the value is neither NaN nor infinite.
    fn is_finite_scalar(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
