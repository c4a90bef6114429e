//! Empirical mode decomposition and its noise-assisted ensemble variant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stl::check_series;
use super::{Component, ComponentKind, DecompError, DecompositionResult, Method};
use crate::scalar::{self, Real};

pub const MIN_LENGTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmdParams {
    pub max_imfs: usize,
    /// Consecutive sifts with stable extrema and zero-crossing counts needed
    /// to accept an IMF.
    pub s_number: usize,
    pub max_sifts: usize,
}

impl Default for EmdParams {
    fn default() -> Self {
        Self {
            max_imfs: 8,
            s_number: 4,
            max_sifts: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EemdParams {
    pub ensemble_size: usize,
    /// Noise standard deviation as a fraction of the signal's.
    pub noise_std: f64,
    pub emd: EmdParams,
    pub rng_seed: u64,
}

impl Default for EemdParams {
    fn default() -> Self {
        Self {
            ensemble_size: 100,
            noise_std: 0.2,
            emd: EmdParams::default(),
            rng_seed: 0,
        }
    }
}

impl EemdParams {
    pub fn validate(&self) -> Result<(), DecompError> {
        if self.ensemble_size == 0 {
            return Err(DecompError::InvalidParams("ensemble size must be at least 1".into()));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(DecompError::InvalidParams("noise std must be finite and non-negative".into()));
        }
        self.emd.validate()
    }
}

impl EmdParams {
    pub fn validate(&self) -> Result<(), DecompError> {
        if self.s_number == 0 || self.max_sifts == 0 {
            return Err(DecompError::InvalidParams("sifting limits must be positive".into()));
        }
        Ok(())
    }
}

/// Decomposes `y` into intrinsic mode functions and a residue. Extraction
/// stops once the residue has fewer than two maxima or two minima, or after
/// `max_imfs` IMFs.
pub fn emd<T: Real>(y: &[T], params: &EmdParams) -> Result<DecompositionResult<T>, DecompError> {
    params.validate()?;
    check_series(y, MIN_LENGTH)?;
    let (imfs, residue) = extract_imfs(y, params);
    Ok(assemble(Method::Emd, imfs, residue))
}

fn assemble<T: Real>(method: Method, imfs: Vec<Vec<T>>, residue: Vec<T>) -> DecompositionResult<T> {
    let mut components: Vec<Component<T>> = imfs
        .into_iter()
        .enumerate()
        .map(|(i, v)| Component::new(format!("imf_{}", i + 1), ComponentKind::Imf { index: i + 1 }, v))
        .collect();
    components.push(Component::new("residue", ComponentKind::Residue, residue));
    DecompositionResult::new(method, components)
}

pub(crate) fn extract_imfs<T: Real>(y: &[T], params: &EmdParams) -> (Vec<Vec<T>>, Vec<T>) {
    let mut residue = y.to_vec();
    let mut imfs = Vec::new();
    while imfs.len() < params.max_imfs {
        let (maxima, minima) = extrema(&residue);
        if maxima.len() < 2 || minima.len() < 2 {
            break;
        }
        let imf = sift(&residue, params);
        for (r, v) in residue.iter_mut().zip(&imf) {
            *r = *r - *v;
        }
        imfs.push(imf);
    }
    (imfs, residue)
}

fn sift<T: Real>(x: &[T], params: &EmdParams) -> Vec<T> {
    let mut h = x.to_vec();
    let mut stable = 0;
    let mut previous: Option<(usize, usize)> = None;
    for _ in 0..params.max_sifts {
        let (maxima, minima) = extrema(&h);
        if maxima.len() < 2 || minima.len() < 2 {
            break;
        }
        let n_ext = maxima.len() + minima.len();
        let n_zero = zero_crossings(&h);
        let counts = (n_ext, n_zero);
        if n_ext.abs_diff(n_zero) <= 1 && previous == Some(counts) {
            stable += 1;
            if stable >= params.s_number {
                break;
            }
        } else {
            stable = 0;
        }
        previous = Some(counts);
        let upper = envelope(&h, &maxima);
        let lower = envelope(&h, &minima);
        for i in 0..h.len() {
            h[i] = h[i] - (upper[i] + lower[i]) / T::two();
        }
    }
    h
}

/// Indices of local maxima and minima. The first sample of a plateau counts.
pub(crate) fn extrema<T: Real>(x: &[T]) -> (Vec<usize>, Vec<usize>) {
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        let mut j = i;
        while j + 1 < n && x[j + 1] == x[i] {
            j += 1;
        }
        if j + 1 >= n {
            break;
        }
        if x[i] > x[i - 1] && x[i] > x[j + 1] {
            maxima.push(i);
        } else if x[i] < x[i - 1] && x[i] < x[j + 1] {
            minima.push(i);
        }
        i = j + 1;
    }
    (maxima, minima)
}

fn zero_crossings<T: Real>(x: &[T]) -> usize {
    x.windows(2)
        .filter(|w| (w[0] < T::zero() && w[1] >= T::zero()) || (w[0] > T::zero() && w[1] <= T::zero()))
        .count()
}

/// Natural cubic spline through the extrema, mirrored about both end
/// samples by two extrema so the envelope does not swing at the edges.
fn envelope<T: Real>(x: &[T], idx: &[usize]) -> Vec<T> {
    let n = x.len();
    let last = n - 1;
    let mut knots: Vec<(T, T)> = Vec::with_capacity(idx.len() + 4);
    for &i in idx.iter().take(2).rev() {
        if i > 0 {
            knots.push((-T::from_usize_lossy(i), x[i]));
        }
    }
    knots.extend(idx.iter().map(|&i| (T::from_usize_lossy(i), x[i])));
    for &i in idx.iter().rev().take(2) {
        if i < last {
            knots.push((T::from_usize_lossy(2 * last - i), x[i]));
        }
    }
    let xs: Vec<T> = knots.iter().map(|k| k.0).collect();
    let ys: Vec<T> = knots.iter().map(|k| k.1).collect();
    let m = natural_spline_moments(&xs, &ys);
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for t in 0..n {
        let tt = T::from_usize_lossy(t);
        while seg + 2 < xs.len() && xs[seg + 1] < tt {
            seg += 1;
        }
        out.push(eval_spline(&xs, &ys, &m, seg, tt));
    }
    out
}

/// Second derivatives of the natural cubic spline (zero at both ends).
fn natural_spline_moments<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    let k = x.len();
    let mut m = vec![T::zero(); k];
    if k < 3 {
        return m;
    }
    let six = T::lit(6.0);
    let inner = k - 2;
    let mut diag = vec![T::zero(); inner];
    let mut upper = vec![T::zero(); inner];
    let mut rhs = vec![T::zero(); inner];
    for j in 0..inner {
        let i = j + 1;
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        diag[j] = T::two() * (h0 + h1);
        upper[j] = h1;
        rhs[j] = six * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
    }
    // Thomas algorithm; the sub-diagonal entry of row j is h0 of knot j + 1.
    for j in 1..inner {
        let lower = x[j + 1] - x[j];
        let f = lower / diag[j - 1];
        diag[j] = diag[j] - f * upper[j - 1];
        rhs[j] = rhs[j] - f * rhs[j - 1];
    }
    for j in (0..inner).rev() {
        let next = if j + 1 < inner { m[j + 2] } else { T::zero() };
        m[j + 1] = (rhs[j] - upper[j] * next) / diag[j];
    }
    m
}

fn eval_spline<T: Real>(x: &[T], y: &[T], m: &[T], seg: usize, t: T) -> T {
    if x.len() == 1 {
        return y[0];
    }
    let six = T::lit(6.0);
    let h = x[seg + 1] - x[seg];
    let a = (x[seg + 1] - t) / h;
    let b = (t - x[seg]) / h;
    a * y[seg] + b * y[seg + 1] + ((a * a * a - a) * m[seg] + (b * b * b - b) * m[seg + 1]) * h * h / six
}

/// Ensemble EMD: averages the IMFs of `y + noise` over members, aligning
/// IMFs by extraction order. Member `i` draws its noise from a ChaCha stream
/// keyed by `(rng_seed, i)`, so results do not depend on thread scheduling.
/// The residue is the input minus the averaged IMFs.
pub fn eemd<T: Real>(y: &[T], params: &EemdParams) -> Result<DecompositionResult<T>, DecompError> {
    params.validate()?;
    check_series(y, MIN_LENGTH)?;
    let n = y.len();
    let sigma = scalar::variance(y).sqrt().to_f64_lossy() * params.noise_std;
    let members: Vec<Vec<Vec<T>>> = (0..params.ensemble_size)
        .into_par_iter()
        .map(|member| {
            let noisy: Vec<T> = if sigma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
                rng.set_stream(member as u64);
                let normal = Normal::new(0.0, sigma).expect("finite sigma");
                y.iter().map(|&v| v + T::lit(normal.sample(&mut rng))).collect()
            } else {
                y.to_vec()
            };
            extract_imfs(&noisy, &params.emd).0
        })
        .collect();

    let count = members.iter().map(Vec::len).max().unwrap_or(0);
    let scale = T::one() / T::from_usize_lossy(params.ensemble_size);
    let mut imfs = vec![vec![T::zero(); n]; count];
    for member in &members {
        for (acc, imf) in imfs.iter_mut().zip(member) {
            for (a, v) in acc.iter_mut().zip(imf) {
                *a = *a + *v;
            }
        }
    }
    if params.ensemble_size > 1 {
        for imf in &mut imfs {
            for v in imf.iter_mut() {
                *v = *v * scale;
            }
        }
    }
    let mut residue = y.to_vec();
    for imf in &imfs {
        for (r, v) in residue.iter_mut().zip(imf) {
            *r = *r - *v;
        }
    }
    Ok(assemble(Method::Eemd, imfs, residue))
}
