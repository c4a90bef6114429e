//! Seasonal-trend decomposition by LOESS, single and multiple periods.

use serde::{Deserialize, Serialize};

use super::loess::Loess;
use super::{Component, ComponentKind, DecompError, DecompositionResult, Method};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StlParams {
    pub period: usize,
    pub seasonal_window: usize,
    pub trend_window: usize,
    pub low_pass_window: usize,
    pub inner_iterations: usize,
    /// Outer passes; passes after the first reweight by remainder size.
    pub robust_iterations: usize,
    pub seasonal_degree: usize,
    pub trend_degree: usize,
    pub low_pass_degree: usize,
}

impl StlParams {
    pub const DEFAULT_SEASONAL_WINDOW: usize = 25;

    pub fn new(period: usize) -> Self {
        Self::with_seasonal_window(period, Self::DEFAULT_SEASONAL_WINDOW)
    }

    pub fn with_seasonal_window(period: usize, seasonal_window: usize) -> Self {
        let ns = seasonal_window as f64;
        let trend = 1.5 * period as f64 / (1.0 - 1.5 / ns);
        Self {
            period,
            seasonal_window,
            trend_window: smallest_odd_at_least(trend),
            low_pass_window: smallest_odd_at_least(period as f64),
            inner_iterations: 2,
            robust_iterations: 1,
            seasonal_degree: 1,
            trend_degree: 1,
            low_pass_degree: 1,
        }
    }

    /// Switches on the robustness loop with its customary 15 passes.
    pub fn robust(mut self) -> Self {
        self.robust_iterations = 15;
        self
    }

    pub fn validate(&self) -> Result<(), DecompError> {
        let bad = |m: String| Err(DecompError::InvalidParams(m));
        if self.period < 2 {
            return bad(format!("period {} < 2", self.period));
        }
        if self.seasonal_window < 7 || self.seasonal_window % 2 == 0 {
            return bad(format!("seasonal window {} must be odd and at least 7", self.seasonal_window));
        }
        for (name, w) in [("trend", self.trend_window), ("low-pass", self.low_pass_window)] {
            if w < 3 || w % 2 == 0 {
                return bad(format!("{name} window {w} must be odd and at least 3"));
            }
        }
        if self.inner_iterations == 0 || self.robust_iterations == 0 {
            return bad("iteration counts must be positive".into());
        }
        if [self.seasonal_degree, self.trend_degree, self.low_pass_degree].iter().any(|&d| d > 2) {
            return bad("LOESS degrees must be 0, 1 or 2".into());
        }
        Ok(())
    }
}

fn smallest_odd_at_least(x: f64) -> usize {
    let mut k = x.ceil().max(3.0) as usize;
    if k % 2 == 0 {
        k += 1;
    }
    k
}

pub(crate) struct StlFit<T> {
    pub seasonal: Vec<T>,
    pub trend: Vec<T>,
}

/// Single-period seasonal-trend decomposition.
pub fn stl<T: Real>(y: &[T], params: &StlParams) -> Result<DecompositionResult<T>, DecompError> {
    let fit = stl_fit(y, params)?;
    let remainder = y.iter().zip(&fit.seasonal).zip(&fit.trend).map(|((&v, &s), &t)| v - s - t).collect();
    Ok(DecompositionResult::new(
        Method::Stl,
        vec![
            Component::new("trend", ComponentKind::Trend, fit.trend),
            Component::new(
                format!("seasonal_{}", params.period),
                ComponentKind::Seasonal { period: params.period },
                fit.seasonal,
            ),
            Component::new("remainder", ComponentKind::Remainder, remainder),
        ],
    ))
}

pub(crate) fn check_series<T: Real>(y: &[T], needed: usize) -> Result<(), DecompError> {
    if y.len() < needed {
        return Err(DecompError::TooShort { needed, got: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(DecompError::MissingValues);
    }
    Ok(())
}

pub(crate) fn stl_fit<T: Real>(y: &[T], p: &StlParams) -> Result<StlFit<T>, DecompError> {
    p.validate()?;
    check_series(y, 2 * p.period)?;
    let n = y.len();
    let mut trend = vec![T::zero(); n];
    let mut seasonal = vec![T::zero(); n];
    let mut weights: Option<Vec<T>> = None;
    for pass in 0..p.robust_iterations {
        for _ in 0..p.inner_iterations {
            inner_step(y, p, weights.as_deref(), &mut seasonal, &mut trend);
        }
        if pass + 1 < p.robust_iterations {
            let residual: Vec<T> = (0..n).map(|i| y[i] - seasonal[i] - trend[i]).collect();
            weights = Some(robustness_weights(&residual));
        }
    }
    Ok(StlFit { seasonal, trend })
}

fn inner_step<T: Real>(y: &[T], p: &StlParams, rw: Option<&[T]>, seasonal: &mut [T], trend: &mut [T]) {
    let n = y.len();
    let period = p.period;
    let detrended: Vec<T> = (0..n).map(|i| y[i] - trend[i]).collect();

    // Cycle-subseries smoothing, extended by one period at each end.
    let mut cycle = vec![T::zero(); n + 2 * period];
    for phase in 0..period {
        let idx: Vec<usize> = (phase..n).step_by(period).collect();
        let sub_x: Vec<T> = (0..idx.len()).map(T::from_usize_lossy).collect();
        let sub_y: Vec<T> = idx.iter().map(|&i| detrended[i]).collect();
        let sub_w: Option<Vec<T>> = rw.map(|w| idx.iter().map(|&i| w[i]).collect());
        let smoother = Loess {
            x: &sub_x,
            y: &sub_y,
            q: p.seasonal_window,
            degree: p.seasonal_degree,
            robustness: sub_w.as_deref(),
        };
        for k in 0..idx.len() + 2 {
            let pos = T::from_usize_lossy(k) - T::one();
            cycle[phase + k * period] = smoother.fit(pos);
        }
    }

    // Low-pass filter of the cycle-subseries.
    let ma1 = moving_average(&cycle, period);
    let ma2 = moving_average(&ma1, period);
    let ma3 = moving_average(&ma2, 3);
    let grid: Vec<T> = (0..n).map(T::from_usize_lossy).collect();
    let low = Loess {
        x: &grid,
        y: &ma3,
        q: p.low_pass_window,
        degree: p.low_pass_degree,
        robustness: None,
    };
    for i in 0..n {
        seasonal[i] = cycle[period + i] - low.fit(grid[i]);
    }

    let deseasonalised: Vec<T> = (0..n).map(|i| y[i] - seasonal[i]).collect();
    let smoother = Loess {
        x: &grid,
        y: &deseasonalised,
        q: p.trend_window,
        degree: p.trend_degree,
        robustness: rw,
    };
    for i in 0..n {
        trend[i] = smoother.fit(grid[i]);
    }
}

fn moving_average<T: Real>(x: &[T], len: usize) -> Vec<T> {
    let out_len = x.len() + 1 - len;
    let inv = T::one() / T::from_usize_lossy(len);
    let mut out = Vec::with_capacity(out_len);
    let mut acc: T = x[..len].iter().copied().sum();
    out.push(acc * inv);
    for i in 1..out_len {
        acc = acc + x[i + len - 1] - x[i - 1];
        out.push(acc * inv);
    }
    out
}

/// Bisquare weights of residuals scaled by six times their median absolute
/// value.
fn robustness_weights<T: Real>(residual: &[T]) -> Vec<T> {
    let mut abs: Vec<T> = residual.iter().map(|r| r.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = abs.len();
    let median = if n % 2 == 1 {
        abs[n / 2]
    } else {
        (abs[n / 2 - 1] + abs[n / 2]) / T::two()
    };
    let h = T::lit(6.0) * median;
    residual
        .iter()
        .map(|r| {
            if h == T::zero() {
                return if *r == T::zero() { T::one() } else { T::zero() };
            }
            let u = r.abs() / h;
            if u < T::one() {
                let c = T::one() - u * u;
                c * c
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Multiple-period decomposition by repeated STL passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MstlParams {
    /// One entry per period, in strictly ascending period order.
    pub stl: Vec<StlParams>,
    /// Back-fitting rounds; a single period always uses one round.
    pub rounds: usize,
}

impl MstlParams {
    pub fn new(periods: &[usize], robust: bool) -> Self {
        let stl = periods
            .iter()
            .map(|&p| {
                let s = StlParams::new(p);
                if robust {
                    s.robust()
                } else {
                    s
                }
            })
            .collect();
        Self { stl, rounds: 2 }
    }

    pub fn periods(&self) -> Vec<usize> {
        self.stl.iter().map(|s| s.period).collect()
    }
}

/// Each round adds back one period's seasonal estimate, re-runs STL at that
/// period on the partially deseasonalised series and stores the new
/// estimate. The trend comes from the final STL pass and the remainder is
/// `y - sum(seasonals) - trend`.
pub fn mstl<T: Real>(y: &[T], params: &MstlParams) -> Result<DecompositionResult<T>, DecompError> {
    let periods = params.periods();
    if periods.is_empty() {
        return Err(DecompError::InvalidParams("at least one period is required".into()));
    }
    if periods.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DecompError::PeriodsNotAscending(periods));
    }
    let max_period = *periods.last().unwrap();
    check_series(y, 2 * max_period)?;
    let rounds = if periods.len() == 1 { 1 } else { params.rounds.max(1) };

    let n = y.len();
    let mut seasonals = vec![vec![T::zero(); n]; periods.len()];
    let mut deseasonalised = y.to_vec();
    let mut trend = vec![T::zero(); n];
    for _ in 0..rounds {
        for (i, stl_params) in params.stl.iter().enumerate() {
            for t in 0..n {
                deseasonalised[t] = deseasonalised[t] + seasonals[i][t];
            }
            let fit = stl_fit(&deseasonalised, stl_params)?;
            seasonals[i] = fit.seasonal;
            trend = fit.trend;
            for t in 0..n {
                deseasonalised[t] = deseasonalised[t] - seasonals[i][t];
            }
        }
    }
    let remainder: Vec<T> = (0..n)
        .map(|t| seasonals.iter().fold(y[t], |acc, s| acc - s[t]) - trend[t])
        .collect();

    let mut components = vec![Component::new("trend", ComponentKind::Trend, trend)];
    for (period, values) in periods.iter().zip(seasonals) {
        components.push(Component::new(
            format!("seasonal_{period}"),
            ComponentKind::Seasonal { period: *period },
            values,
        ));
    }
    components.push(Component::new("remainder", ComponentKind::Remainder, remainder));
    Ok(DecompositionResult::new(Method::Mstl, components))
}
