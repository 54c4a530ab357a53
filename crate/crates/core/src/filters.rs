//! Baseline denoisers: moving average, exponential moving average and a
//! first-order low-pass Butterworth filter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::rmse;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("moving-average order must be odd and within 1..={max}, got {order}")]
    BadOrder { order: usize, max: usize },
    #[error("EMA alpha must lie in [0, 1], got {0}")]
    BadAlpha(f64),
    #[error("normalized cutoff must lie strictly inside (0, 1), got {0}")]
    BadCutoff(f64),
    #[error("reference has {reference} windows, noisy decay has {noisy}")]
    LengthMismatch { noisy: usize, reference: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FilterKind {
    MovingAverage,
    ExponentialMovingAverage,
    Butterworth,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [
        FilterKind::MovingAverage,
        FilterKind::ExponentialMovingAverage,
        FilterKind::Butterworth,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FilterKind::MovingAverage => "MA",
            FilterKind::ExponentialMovingAverage => "EMA",
            FilterKind::Butterworth => "Butterworth",
        }
    }

    /// Hyperparameter grid, ordered from least to most smoothing.
    pub fn grid(self, len: usize) -> Vec<FilterSpec> {
        match self {
            FilterKind::MovingAverage => (0..=5)
                .map(|s| 2 * s + 1)
                .filter(|&m| m <= 2 * len - 1)
                .map(FilterSpec::MovingAverage)
                .collect(),
            FilterKind::ExponentialMovingAverage => (0..=20)
                .rev()
                .map(|i| FilterSpec::ExponentialMovingAverage(i as f64 * 0.05))
                .collect(),
            FilterKind::Butterworth => (1..=49)
                .rev()
                .map(|i| FilterSpec::Butterworth(i as f64 * 0.02))
                .collect(),
        }
    }
}

/// A filter with its hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FilterSpec {
    /// Odd order `M = 2S + 1`.
    MovingAverage(usize),
    /// Smoothing factor `alpha`; 1 leaves the input unchanged.
    ExponentialMovingAverage(f64),
    /// Cutoff normalized by the Nyquist frequency.
    Butterworth(f64),
}

impl FilterSpec {
    pub fn kind(&self) -> FilterKind {
        match self {
            FilterSpec::MovingAverage(_) => FilterKind::MovingAverage,
            FilterSpec::ExponentialMovingAverage(_) => FilterKind::ExponentialMovingAverage,
            FilterSpec::Butterworth(_) => FilterKind::Butterworth,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, FilterError> {
        match *self {
            FilterSpec::MovingAverage(m) => moving_average(x, m),
            FilterSpec::ExponentialMovingAverage(a) => exponential_moving_average(x, a),
            FilterSpec::Butterworth(w) => butterworth_lowpass(x, w),
        }
    }

    pub fn hyperparameter(&self) -> f64 {
        match *self {
            FilterSpec::MovingAverage(m) => m as f64,
            FilterSpec::ExponentialMovingAverage(a) => a,
            FilterSpec::Butterworth(w) => w,
        }
    }
}

/// Centred moving average of odd order `order`, edge-replicated so the
/// output keeps the input length.
pub fn moving_average(x: &[f64], order: usize) -> Result<Vec<f64>, FilterError> {
    let max = (2 * x.len()).saturating_sub(1);
    if order % 2 == 0 || order == 0 || order > max {
        return Err(FilterError::BadOrder { order, max });
    }
    let half = (order / 2) as isize;
    let last = x.len() as isize - 1;
    Ok((0..x.len() as isize)
        .map(|j| {
            (-half..=half)
                .map(|s| x[(j + s).clamp(0, last) as usize])
                .sum::<f64>()
                / order as f64
        })
        .collect())
}

/// `y1 = x1`, `yj = alpha·xj + (1 − alpha)·y(j−1)`.
pub fn exponential_moving_average(x: &[f64], alpha: f64) -> Result<Vec<f64>, FilterError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(FilterError::BadAlpha(alpha));
    }
    let mut out = Vec::with_capacity(x.len());
    let mut prev = match x.first() {
        Some(&v) => v,
        None => return Ok(out),
    };
    out.push(prev);
    for &v in &x[1..] {
        prev = alpha * v + (1.0 - alpha) * prev;
        out.push(prev);
    }
    Ok(out)
}

/// Coefficients `(b0, b1, a1)` of `y[n] = b0·x[n] + b1·x[n−1] − a1·y[n−1]`,
/// from the bilinear transform of `1 / (1 + s/ωc)` with the cutoff prewarped
/// so the −3 dB point lands exactly on `cutoff`.
pub fn butterworth_coefficients(cutoff: f64) -> Result<(f64, f64, f64), FilterError> {
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(FilterError::BadCutoff(cutoff));
    }
    let k = (std::f64::consts::FRAC_PI_2 * cutoff).tan();
    let b = k / (1.0 + k);
    let a1 = (k - 1.0) / (k + 1.0);
    Ok((b, b, a1))
}

/// Single causal pass; filter state starts at the first sample so constant
/// inputs pass without a start-up transient.
pub fn butterworth_lowpass(x: &[f64], cutoff: f64) -> Result<Vec<f64>, FilterError> {
    let (b0, b1, a1) = butterworth_coefficients(cutoff)?;
    let Some(&first) = x.first() else {
        return Ok(Vec::new());
    };
    let (mut x_prev, mut y_prev) = (first, first);
    Ok(x.iter()
        .map(|&v| {
            let y = b0 * v + b1 * x_prev - a1 * y_prev;
            x_prev = v;
            y_prev = y;
            y
        })
        .collect())
}

/// Grid-searches the hyperparameter of `kind` minimizing RMSE against
/// `reference`. Ties keep the less-smoothing setting.
pub fn tune(kind: FilterKind, noisy: &[f64], reference: &[f64]) -> Result<(FilterSpec, f64), FilterError> {
    if noisy.len() != reference.len() {
        return Err(FilterError::LengthMismatch {
            noisy: noisy.len(),
            reference: reference.len(),
        });
    }
    let mut best: Option<(FilterSpec, f64)> = None;
    for spec in kind.grid(noisy.len()) {
        let out = spec.apply(noisy)?;
        let err = rmse(reference, &out).expect("equal lengths");
        if best.is_none_or(|(_, e)| err < e) {
            best = Some((spec, err));
        }
    }
    Ok(best.expect("non-empty grid"))
}
