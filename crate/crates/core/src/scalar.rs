//! Scalar abstraction shared by the numeric kernels.
//!
//! Decomposition, LOESS, metrics and the quantile network are written once
//! against [`Real`] and instantiated for `f32` and `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating point scalar usable by every numeric routine in the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Every literal used in this crate is
    /// representable (up to rounding) in both `f32` and `f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("literal representable as scalar")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable as scalar")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Largest absolute value of a slice, ignoring NaNs. Zero for empty input.
pub fn max_abs<T: Real>(values: &[T]) -> T {
    values
        .iter()
        .filter(|v| !v.is_nan())
        .fold(T::zero(), |acc, v| acc.max(v.abs()))
}

pub fn mean<T: Real>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    values.iter().copied().sum::<T>() / T::from_usize_lossy(values.len())
}

/// Population variance.
pub fn variance<T: Real>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let m = mean(values);
    values.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::from_usize_lossy(values.len())
}

/// Pearson correlation; zero when either side has no variance.
pub fn correlation<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    if n == 0 {
        return T::zero();
    }
    let ma = mean(&a[..n]);
    let mb = mean(&b[..n]);
    let mut sab = T::zero();
    let mut saa = T::zero();
    let mut sbb = T::zero();
    for i in 0..n {
        let da = a[i] - ma;
        let db = b[i] - mb;
        sab = sab + da * db;
        saa = saa + da * da;
        sbb = sbb + db * db;
    }
    if saa <= T::zero() || sbb <= T::zero() {
        return T::zero();
    }
    sab / (saa * sbb).sqrt()
}

/// Lag-`lag` autocorrelation around the series mean.
pub fn autocorrelation<T: Real>(values: &[T], lag: usize) -> T {
    let n = values.len();
    if lag >= n {
        return T::zero();
    }
    let m = mean(values);
    let denom: T = values.iter().map(|&v| (v - m) * (v - m)).sum();
    if denom <= T::zero() {
        return T::zero();
    }
    let num: T = (lag..n).map(|i| (values[i] - m) * (values[i - lag] - m)).sum();
    num / denom
}
