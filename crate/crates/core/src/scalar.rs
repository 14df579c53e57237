//! Scalar abstraction shared by the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the physics and learning kernels are written against.
///
/// Implemented for `f32` and `f64`. The simulator and trainer instantiate
/// everything at `f64`; the `f32` instantiation exists for callers that want
/// to trade precision for memory.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal or config value.
    fn lit(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn lit(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// `ln(1 + e^x)` without overflow.
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::lit(30.0) {
        x
    } else if x < T::lit(-30.0) {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn relu<T: Real>(x: T) -> T {
    x.max(T::zero())
}

/// Ratio with the saturation rules used for queue delays: `0/0 = 0`,
/// `x/0 = cap` for `x > 0`, otherwise `min(num/den, cap)`.
pub fn capped_ratio<T: Real>(num: T, den: T, cap: T) -> T {
    if num <= T::zero() {
        T::zero()
    } else if den <= T::zero() {
        cap
    } else {
        (num / den).min(cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_reference() {
        for &x in &[-40.0_f64, -3.0, 0.0, 0.7, 12.0, 45.0] {
            let expect = (1.0 + x.exp()).ln();
            assert!((softplus(x) - expect).abs() < 1e-12 * expect.max(1.0));
        }
        assert!((softplus(0.0_f32) - 2.0_f32.ln()).abs() < 1e-6);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(1000.0_f64), 1.0);
        assert_eq!(sigmoid(-1000.0_f64), 0.0);
        assert!((sigmoid(0.0_f64) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn capped_ratio_rules() {
        assert_eq!(capped_ratio(0.0, 0.0, 2.0), 0.0);
        assert_eq!(capped_ratio(1.0, 0.0, 2.0), 2.0);
        assert_eq!(capped_ratio(1.0, 4.0, 2.0), 0.25);
        assert_eq!(capped_ratio(10.0, 1.0, 2.0), 2.0);
    }
}
