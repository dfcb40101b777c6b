//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used throughout the library: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::infinity)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `|z|^{e} * sign(z)`, with the value at `z = 0` taken as `0`.
#[inline]
pub fn signed_pow<T: Real>(z: T, e: T) -> T {
    if z == T::zero() {
        T::zero()
    } else {
        z.abs().powf(e) * z.signum()
    }
}

/// Relative comparison with a floor of one on the scale.
#[inline]
pub fn rel_close<T: Real>(a: T, b: T, tol: T) -> bool {
    (a - b).abs() <= tol * T::one().max(a.abs()).max(b.abs())
}
