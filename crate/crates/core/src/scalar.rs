use std::fmt::{Debug, Display, LowerExp};

use nalgebra::{Complex, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable throughout the crate: `f32` or `f64`.
pub trait Scalar:
    RealField
    + Copy
    + std::iter::Sum
    + FromPrimitive
    + ToPrimitive
    + LowerExp
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon.
    fn eps() -> Self {
        Self::default_epsilon()
    }

    /// Smallest positive normal value.
    fn tiny() -> Self {
        Self::min_value()
            .map_or(Self::zero(), |m| -m)
            .recip()
            .max(Self::eps() * Self::eps())
    }

    /// Modulus of a complex number.
    fn cabs(z: &Complex<Self>) -> Self {
        z.re.hypot(z.im)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
