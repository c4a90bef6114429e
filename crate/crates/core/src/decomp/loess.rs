//! Locally weighted polynomial regression with tricube neighbourhood weights.

use super::DecompError;
use crate::scalar::Real;

/// Smooths `(x, y)` and evaluates the fit at `eval_points`.
///
/// Each evaluation uses the `ceil(span * n)` nearest neighbours, tricube
/// weights `(1 - (d / dmax)^3)^3` scaled by optional robustness weights, and
/// a weighted least-squares polynomial of the given degree. A singular
/// neighbourhood falls back to the weighted mean.
pub fn loess<T: Real>(
    x: &[T],
    y: &[T],
    eval_points: &[T],
    span: T,
    degree: usize,
    robustness_weights: Option<&[T]>,
) -> Result<Vec<T>, DecompError> {
    let n = x.len();
    if y.len() != n || robustness_weights.is_some_and(|w| w.len() != n) {
        return Err(DecompError::InvalidInput("x, y and weights must have equal length".into()));
    }
    if degree > 2 {
        return Err(DecompError::InvalidInput(format!("degree {degree} not in 0..=2")));
    }
    if n < degree + 1 {
        return Err(DecompError::TooShort { needed: degree + 1, got: n });
    }
    if !(span > T::zero() && span <= T::one()) {
        return Err(DecompError::InvalidInput("span must lie in (0, 1]".into()));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DecompError::InvalidInput("x must be strictly increasing".into()));
    }
    let q = (span * T::from_usize_lossy(n)).ceil().to_usize().unwrap_or(n).clamp(1, n);
    let smoother = Loess {
        x,
        y,
        q,
        degree,
        robustness: robustness_weights,
    };
    Ok(eval_points.iter().map(|&x0| smoother.fit(x0)).collect())
}

/// A LOESS smoother with an explicit neighbour count `q`, which may exceed
/// the number of points: the bandwidth then grows by `(q - n) / 2` mean
/// sample spacings beyond the farthest point.
pub(crate) struct Loess<'a, T: Real> {
    pub x: &'a [T],
    pub y: &'a [T],
    pub q: usize,
    pub degree: usize,
    pub robustness: Option<&'a [T]>,
}

impl<T: Real> Loess<'_, T> {
    pub fn fit(&self, x0: T) -> T {
        let n = self.x.len();
        let (lo, hi) = self.neighbours(x0);
        let mut h = (x0 - self.x[lo]).abs().max((self.x[hi - 1] - x0).abs());
        if self.q > n && n > 1 {
            let spacing = (self.x[n - 1] - self.x[0]) / T::from_usize_lossy(n - 1);
            h = h + T::from_usize_lossy(self.q - n) / T::two() * spacing;
        }
        let mut w = Vec::with_capacity(hi - lo);
        for i in lo..hi {
            let d = (self.x[i] - x0).abs();
            let mut wi = if h > T::zero() {
                tricube(d / h)
            } else if d == T::zero() {
                T::one()
            } else {
                T::zero()
            };
            if let Some(r) = self.robustness {
                wi = wi * r[i];
            }
            w.push(wi);
        }
        let scale = if h > T::zero() { h } else { T::one() };
        local_polynomial(&self.x[lo..hi], &self.y[lo..hi], &w, x0, scale, self.degree)
    }

    /// Half-open index range of the `min(q, n)` points nearest to `x0`.
    fn neighbours(&self, x0: T) -> (usize, usize) {
        let n = self.x.len();
        let k = self.q.min(n);
        let mut lo = self.x.partition_point(|&xi| xi < x0);
        let mut hi = lo;
        while hi - lo < k {
            if lo == 0 {
                hi += 1;
            } else if hi == n {
                lo -= 1;
            } else if x0 - self.x[lo - 1] <= self.x[hi] - x0 {
                lo -= 1;
            } else {
                hi += 1;
            }
        }
        (lo, hi)
    }
}

pub(crate) fn tricube<T: Real>(u: T) -> T {
    if u >= T::one() {
        return T::zero();
    }
    let c = T::one() - u * u * u;
    c * c * c
}

/// Weighted least-squares polynomial in `(x - x0) / scale`, evaluated at
/// `x0`. Solves the normal equations by Gaussian elimination with partial
/// pivoting.
fn local_polynomial<T: Real>(x: &[T], y: &[T], w: &[T], x0: T, scale: T, degree: usize) -> T {
    let sw: T = w.iter().copied().sum();
    if !(sw > T::zero()) {
        return weighted_mean(y, w);
    }
    if degree == 0 {
        return weighted_mean(y, w);
    }
    let m = degree + 1;
    let mut a = [[T::zero(); 4]; 3];
    for i in 0..x.len() {
        if w[i] == T::zero() {
            continue;
        }
        let u = (x[i] - x0) / scale;
        let mut powers = [T::one(); 5];
        for p in 1..5 {
            powers[p] = powers[p - 1] * u;
        }
        for r in 0..m {
            for c in 0..m {
                a[r][c] = a[r][c] + w[i] * powers[r + c];
            }
            a[r][m] = a[r][m] + w[i] * powers[r] * y[i];
        }
    }
    match solve(&mut a, m, sw) {
        Some(b0) => b0,
        None => weighted_mean(y, w),
    }
}

fn solve<T: Real>(a: &mut [[T; 4]; 3], m: usize, magnitude: T) -> Option<T> {
    let tiny = T::lit(1e-10) * magnitude;
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if !(a[pivot][col].abs() > tiny) {
            return None;
        }
        a.swap(col, pivot);
        for row in col + 1..m {
            let f = a[row][col] / a[col][col];
            for c in col..=m {
                a[row][c] = a[row][c] - f * a[col][c];
            }
        }
    }
    let mut b = [T::zero(); 3];
    for row in (0..m).rev() {
        let mut acc = a[row][m];
        for c in row + 1..m {
            acc = acc - a[row][c] * b[c];
        }
        b[row] = acc / a[row][row];
    }
    b[0].is_finite().then_some(b[0])
}

fn weighted_mean<T: Real>(y: &[T], w: &[T]) -> T {
    let sw: T = w.iter().copied().sum();
    if sw > T::zero() {
        y.iter().zip(w).map(|(&yi, &wi)| yi * wi).sum::<T>() / sw
    } else {
        y.iter().copied().sum::<T>() / T::from_usize_lossy(y.len().max(1))
    }
}
