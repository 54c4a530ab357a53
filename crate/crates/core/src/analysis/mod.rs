//! Reconstruction metrics, Bayesian denoising, survey QC and latent-space
//! analysis.
//!
//! Note the two norms: [`rmse`] divides by the number of windows inside the
//! root, [`peak_snr`] uses the raw Euclidean norm of the misfit.

mod bench;
mod denoise;
mod density;
mod latent;

pub use bench::{
    denoising_benchmark, fitted_slope, noise_sensitivity, Method, MethodStats, SensitivityRow,
};
pub use denoise::{
    denoise, denoise_batch, survey_snr_histogram, DenoiseConfig, DenoiseResult, SnrHistogram,
};
pub use density::{density_chart, dlc_difference, reference_range, DensityChart};
pub use latent::{
    latent_chargeability_correlation, latent_sweep, SweepOptions, SweepRow, SweepRun,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vae::VaeError;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("peak S/N undefined: input has zero dynamic range")]
    ZeroRange,
    #[error("at least {required} {what} required, got {found}")]
    TooFew {
        what: &'static str,
        required: usize,
        found: usize,
    },
    #[error("correlation undefined for latent coordinate {coordinate}: zero variance")]
    UndefinedCorrelation { coordinate: usize },
    #[error("density charts differ in shape or range")]
    ChartShape,
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("latent dimension {k}: {source}")]
    Sweep {
        k: usize,
        #[source]
        source: Box<AnalysisError>,
    },
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Filter(#[from] crate::filters::FilterError),
}

/// Root-mean-square misfit, `sqrt(mean((x − x')²))`, in mV/V.
pub fn rmse(x: &[f64], x_prime: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != x_prime.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), x_prime.len()));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let sse: f64 = x.iter().zip(x_prime).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / x.len() as f64).sqrt())
}

/// Peak signal-to-noise ratio of a reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PeakSnr {
    Db(f64),
    /// Reconstruction equals the input exactly.
    Perfect,
}

impl PeakSnr {
    /// Decibels, with `+inf` for a perfect reconstruction.
    pub fn db(self) -> f64 {
        match self {
            PeakSnr::Db(v) => v,
            PeakSnr::Perfect => f64::INFINITY,
        }
    }
}

/// `20·log10((max x − min x) / ‖x − x'‖₂)`.
pub fn peak_snr(x: &[f64], x_prime: &[f64]) -> Result<PeakSnr, AnalysisError> {
    if x.len() != x_prime.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), x_prime.len()));
    }
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(AnalysisError::ZeroRange);
    }
    let norm = x
        .iter()
        .zip(x_prime)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 {
        return Ok(PeakSnr::Perfect);
    }
    Ok(PeakSnr::Db(20.0 * (range / norm).log10()))
}

/// Linearly interpolated quantile of already sorted values.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(rmse(&x, &x).unwrap(), 0.0);
        assert_eq!(rmse(&[5.0, 7.0, -1.0], &[3.0, 5.0, -3.0]).unwrap(), 2.0);
        assert!((rmse(&[3.0, -4.0], &[0.0, 0.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((rmse(&[3.0, -4.0], &[0.0, 0.0]).unwrap() - 3.5355).abs() < 1e-4);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn peak_snr_examples() {
        // range 10, misfit norm 1
        let x = [10.0, 5.0, 0.0];
        let x1 = [10.0, 6.0, 0.0];
        assert!((peak_snr(&x, &x1).unwrap().db() - 20.0).abs() < 1e-12);
        let x10 = [10.0, 15.0, 0.0];
        assert!(peak_snr(&x, &x10).unwrap().db().abs() < 1e-12);
        assert_eq!(peak_snr(&x, &x).unwrap(), PeakSnr::Perfect);
        assert!(matches!(peak_snr(&[2.0; 4], &[1.0; 4]), Err(AnalysisError::ZeroRange)));
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 5.0);
        assert!((quantile_sorted(&s, 0.025) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn pearson_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&a, &[-1.0, -2.0, -3.0, -4.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&a, &[1.0; 4]), None);
    }

    proptest! {
        #[test]
        fn rmse_symmetric_and_shift_invariant(
            pairs in prop::collection::vec((-30.0f64..30.0, -30.0f64..30.0), 1..40),
            c in -100.0f64..100.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let r = rmse(&x, &y).unwrap();
            prop_assert!((r - rmse(&y, &x).unwrap()).abs() <= 1e-12 * (1.0 + r));
            let xs: Vec<f64> = x.iter().map(|v| v + c).collect();
            let ys: Vec<f64> = y.iter().map(|v| v + c).collect();
            prop_assert!((r - rmse(&xs, &ys).unwrap()).abs() <= 1e-9 * (1.0 + r));
        }

        #[test]
        fn peak_snr_scale_invariant(
            x in prop::collection::vec(-30.0f64..30.0, 3..30),
            delta in prop::collection::vec(0.01f64..2.0, 30),
            s in 0.1f64..10.0,
        ) {
            let xp: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let base = peak_snr(&x, &xp);
            prop_assume!(base.is_ok());
            let xs: Vec<f64> = x.iter().map(|v| v * s).collect();
            let xps: Vec<f64> = xp.iter().map(|v| v * s).collect();
            let a = base.unwrap().db();
            let b = peak_snr(&xs, &xps).unwrap().db();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
