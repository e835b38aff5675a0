//! Scalar abstraction shared by every signal buffer in the crate.
//!
//! Physical parameters (durations, frequencies, powers) are always `f64`.
//! Sample buffers are generic over [`Real`] so the same pipeline runs in
//! single or double precision.

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Floating-point sample type: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + NumAssign
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from a physical `f64` parameter.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite f64 converts to any float")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Casts a double-precision complex value into the sample type.
#[inline]
pub fn complex_of<T: Real>(z: Complex<f64>) -> Complex<T> {
    Complex::new(T::of(z.re), T::of(z.im))
}

/// Widens a sample to double precision.
#[inline]
pub fn complex_f64<T: Real>(z: Complex<T>) -> Complex<f64> {
    Complex::new(z.re.as_f64(), z.im.as_f64())
}

/// `exp(j * phase)` evaluated in double precision, then narrowed.
#[inline]
pub fn cis<T: Real>(phase: f64) -> Complex<T> {
    let (s, c) = phase.sin_cos();
    Complex::new(T::of(c), T::of(s))
}

/// Sum of squared magnitudes, accumulated in `f64`.
pub fn energy<T: Real>(x: &[Complex<T>]) -> f64 {
    x.iter().map(|z| complex_f64(*z).norm_sqr()).sum()
}

/// `sum x(n) * conj(y(n))`, accumulated in `f64`.
pub fn inner_product<T: Real>(x: &[Complex<T>], y: &[Complex<T>]) -> Complex<f64> {
    x.iter()
        .zip(y)
        .map(|(a, b)| complex_f64(*a) * complex_f64(*b).conj())
        .sum()
}
