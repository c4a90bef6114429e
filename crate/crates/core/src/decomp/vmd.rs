//! Variational mode decomposition by ADMM in the frequency domain.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::emd::{eemd, EemdParams};
use super::stl::check_series;
use super::{Component, ComponentKind, DecompError, DecompositionResult, Method};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmdParams {
    pub k: usize,
    pub alpha: f64,
    pub tau: f64,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for VmdParams {
    fn default() -> Self {
        Self {
            k: 4,
            alpha: 2000.0,
            tau: 0.0,
            tol: 1e-7,
            max_iterations: 500,
        }
    }
}

impl VmdParams {
    pub fn with_modes(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), DecompError> {
        if self.k == 0 {
            return Err(DecompError::InvalidParams("VMD needs at least one mode".into()));
        }
        if !(self.alpha > 0.0) || !(self.tau >= 0.0) || !(self.tol > 0.0) || self.max_iterations == 0 {
            return Err(DecompError::InvalidParams(
                "VMD requires alpha > 0, tau >= 0, tol > 0 and a positive iteration cap".into(),
            ));
        }
        Ok(())
    }
}

/// Extracts `k` band-limited modes. Center frequencies are reported in
/// cycles per sample and modes are ordered by ascending frequency. When the
/// iteration cap is hit the last iterate is returned with `converged` unset.
pub fn vmd<T: Real>(y: &[T], params: &VmdParams) -> Result<DecompositionResult<T>, DecompError> {
    params.validate()?;
    check_series(y, 2 * params.k)?;
    let n = y.len();
    let k = params.k;

    // Mirror extension: the first half flipped, the signal, the second half
    // flipped. The extended length is always 2n.
    let head = n.div_ceil(2);
    let mut mirrored: Vec<Complex<T>> = Vec::with_capacity(2 * n);
    mirrored.extend(y[..head].iter().rev().map(|&v| Complex::new(v, T::zero())));
    mirrored.extend(y.iter().map(|&v| Complex::new(v, T::zero())));
    mirrored.extend(y[head..].iter().rev().map(|&v| Complex::new(v, T::zero())));
    let m = mirrored.len();
    let mut planner = FftPlanner::<T>::new();
    planner.plan_fft_forward(m).process(&mut mirrored);

    // One-sided spectrum over the nonnegative frequencies j / m, j < m / 2.
    let half = m / 2;
    let f_hat = &mirrored[..half];
    let freqs: Vec<T> = (0..half).map(|j| T::from_usize_lossy(j) / T::from_usize_lossy(m)).collect();
    let alpha2 = T::lit(2.0 * params.alpha);
    let tau = T::lit(params.tau);
    let zero = Complex::new(T::zero(), T::zero());

    let mut modes = vec![vec![zero; half]; k];
    let mut omega: Vec<T> = (0..k)
        .map(|i| T::lit((i as f64 + 0.5) * 0.25 / k as f64))
        .collect();
    let mut lambda = vec![zero; half];
    let mut sum: Vec<Complex<T>> = vec![zero; half];
    let mut converged = false;
    for _ in 0..params.max_iterations {
        let mut diff = T::zero();
        for i in 0..k {
            let mut num = T::zero();
            let mut den = T::zero();
            let mut delta = T::zero();
            let mut old_norm = T::zero();
            for j in 0..half {
                let old = modes[i][j];
                let others = sum[j] - old;
                let w = freqs[j] - omega[i];
                let new = (f_hat[j] - others + lambda[j] / T::two()) / (T::one() + alpha2 * w * w);
                sum[j] = others + new;
                modes[i][j] = new;
                let p = new.norm_sqr();
                num = num + freqs[j] * p;
                den = den + p;
                delta = delta + (new - old).norm_sqr();
                old_norm = old_norm + old.norm_sqr();
            }
            if den > T::zero() {
                omega[i] = num / den;
            }
            diff = diff
                + if old_norm > T::zero() {
                    delta / old_norm
                } else if delta > T::zero() {
                    T::infinity()
                } else {
                    T::zero()
                };
        }
        if tau > T::zero() {
            for j in 0..half {
                lambda[j] = lambda[j] + (f_hat[j] - sum[j]) * tau;
            }
        }
        if diff < T::lit(params.tol) {
            converged = true;
            break;
        }
    }

    let inverse = planner.plan_fft_inverse(m);
    let scale = T::one() / T::from_usize_lossy(m);
    let offset = head;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| omega[a].partial_cmp(&omega[b]).unwrap());
    let components = order
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            let mut full = vec![zero; m];
            full[0] = Complex::new(modes[i][0].re, T::zero());
            for j in 1..half {
                full[j] = modes[i][j];
                full[m - j] = modes[i][j].conj();
            }
            inverse.process(&mut full);
            let values = full[offset..offset + n].iter().map(|c| c.re * scale).collect();
            Component::new(
                format!("mode_{}", rank + 1),
                ComponentKind::Mode {
                    center_frequency: omega[i].to_f64_lossy(),
                },
                values,
            )
        })
        .collect();
    let mut result = DecompositionResult::new(Method::Vmd, components);
    result.converged = converged;
    Ok(result)
}

/// VMD followed by ensemble EMD of the VMD residual. Components are the
/// modes, then the IMFs, then the residue.
pub fn vmd_then_eemd<T: Real>(
    y: &[T],
    vmd_params: &VmdParams,
    eemd_params: &EemdParams,
) -> Result<DecompositionResult<T>, DecompError> {
    let first = vmd(y, vmd_params)?;
    let modes_sum = first.recompose();
    let residual: Vec<T> = y.iter().zip(&modes_sum).map(|(&a, &b)| a - b).collect();
    let second = eemd(&residual, eemd_params)?;
    let mut components = first.components;
    components.extend(second.components);
    let mut result = DecompositionResult::new(Method::VmdEemd, components);
    result.converged = first.converged;
    Ok(result)
}
