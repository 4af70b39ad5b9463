//! Scalar abstraction shared by the geometry and estimation code.

use nalgebra::RealField;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar usable by every generic routine in this crate.
///
/// Implemented for `f32` and `f64`. Tolerances are written as `f64`
/// constants and converted with [`Real::lit`].
pub trait Real: RealField + Copy + FloatConst + FromPrimitive + ToPrimitive {
    /// Converts an `f64` literal or tolerance into this scalar type.
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy conversion to `f64` for diagnostics and error payloads.
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the type.
    fn eps() -> Self {
        Self::default_epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}
