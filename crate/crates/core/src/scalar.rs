//! Scalar abstraction shared by the flow kernels.

use num_traits::{Float, FloatConst, FromPrimitive, NumCast, ToPrimitive};
use std::fmt::{Debug, Display};

/// Floating point scalar used for speeds, angles and fitted plane parameters: `f32` or `f64`.
///
/// Timestamps stay integer microseconds everywhere; only derived quantities use `Scalar`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumCast
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle<T: Scalar>(theta: T) -> T {
    let two_pi = T::TAU();
    let mut w = theta % two_pi;
    if w < T::zero() {
        w = w + two_pi;
    }
    // `-tiny + 2π` can round to exactly 2π
    if w >= two_pi {
        w = T::zero();
    }
    w
}

/// Smallest absolute difference between two angles, in `[0, π]`.
pub fn angle_distance<T: Scalar>(a: T, b: T) -> T {
    let d = wrap_angle(a - b);
    if d > T::PI() {
        T::TAU() - d
    } else {
        d
    }
}
