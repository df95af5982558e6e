//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar the geometry and estimation code is written against.
///
/// Implemented for `f32` and `f64`. Math functions (`sqrt`, `atan2`, ...) come
/// from [`RealField`]; conversions from literals go through [`Real::lit`].
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// Relative tolerance appropriate for the precision of the type.
    #[inline]
    fn tolerance() -> Self {
        Self::default_epsilon() * Self::lit(1e3)
    }
}

impl<T> Real for T where
    T: RealField
        + Copy
        + FromPrimitive
        + ToPrimitive
        + Default
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle<T: Real>(angle: T) -> T {
    let two_pi = T::two_pi();
    let mut a = angle % two_pi;
    if a > T::pi() {
        a -= two_pi;
    } else if a <= -T::pi() {
        a += two_pi;
    }
    a
}

/// Wraps an angle into `(-π/2, π/2]`, treating headings that differ by π as equal.
pub fn normalize_half_angle<T: Real>(angle: T) -> T {
    let mut a = normalize_angle(angle);
    if a > T::frac_pi_2() {
        a -= T::pi();
    } else if a <= -T::frac_pi_2() {
        a += T::pi();
    }
    a
}

/// Absolute heading difference modulo π, in `[0, π/2]`.
pub fn heading_error<T: Real>(a: T, b: T) -> T {
    normalize_half_angle(a - b).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn angle_wrapping() {
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.5f64) - 0.5).abs() < 1e-12);
        assert!((normalize_half_angle(PI) - 0.0).abs() < 1e-12);
        assert!((normalize_half_angle(-PI / 2.0) - PI / 2.0).abs() < 1e-12);
        assert!((heading_error(0.1f64, PI + 0.1)).abs() < 1e-12);
        assert!((normalize_angle(-7.0f32) - (-7.0 + 2.0 * std::f32::consts::PI)).abs() < 1e-5);
    }
}
