use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{denoise_batch, mean_std, rmse, AnalysisError, DenoiseConfig};
use crate::data::{contaminate, IpDecay};
use crate::filters::{tune, FilterKind};
use crate::vae::VaeModel;

/// A denoising method in the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// The noisy input itself.
    None,
    Vae,
    Filter(FilterKind),
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::None,
        Method::Vae,
        Method::Filter(FilterKind::MovingAverage),
        Method::Filter(FilterKind::ExponentialMovingAverage),
        Method::Filter(FilterKind::Butterworth),
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::None => "None",
            Method::Vae => "IP-VAE",
            Method::Filter(k) => k.label(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Mean and standard deviation of per-decay RMSE against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: Method,
    pub mean: f64,
    pub std: f64,
}

/// Denoising RMSE of every method against ground truth. Filters are tuned
/// per decay against the ground truth.
pub fn denoising_benchmark<X: AsRef<[f64]> + Sync>(
    model: &VaeModel,
    truth: &[X],
    noisy: &[X],
    denoise: &DenoiseConfig,
) -> Result<Vec<MethodStats>, AnalysisError> {
    if truth.len() != noisy.len() {
        return Err(AnalysisError::LengthMismatch(truth.len(), noisy.len()));
    }
    if truth.is_empty() {
        return Err(AnalysisError::TooFew {
            what: "decays",
            required: 1,
            found: 0,
        });
    }
    let vae = denoise_batch(model, noisy, denoise)?;
    Method::ALL
        .iter()
        .map(|&method| {
            let errors: Vec<f64> = (0..truth.len())
                .into_par_iter()
                .map(|i| {
                    let (t, x) = (truth[i].as_ref(), noisy[i].as_ref());
                    match method {
                        Method::None => rmse(t, x),
                        Method::Vae => rmse(t, &vae[i].median),
                        Method::Filter(kind) => Ok(tune(kind, x, t)?.1),
                    }
                })
                .collect::<Result<_, AnalysisError>>()?;
            let (mean, std) = mean_std(&errors);
            Ok(MethodStats { method, mean, std })
        })
        .collect()
}

/// One point of the RMSE-versus-noise curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub noise_sigma: f64,
    pub stats: MethodStats,
}

/// Benchmarks every method at each noise level. The same unit-variance
/// noise draw is scaled to every level, so curves differ only by `sigma`.
pub fn noise_sensitivity(
    model: &VaeModel,
    truth: &[IpDecay],
    sigmas: &[f64],
    noise_seed: u64,
    denoise: &DenoiseConfig,
) -> Result<Vec<SensitivityRow>, AnalysisError> {
    let clean: Vec<&[f64]> = truth.iter().map(|d| d.windows.as_slice()).collect();
    let mut rows = Vec::new();
    for &sigma in sigmas {
        let noisy = contaminate(truth, sigma, 0.0, noise_seed);
        let noisy: Vec<&[f64]> = noisy.iter().map(|d| d.windows.as_slice()).collect::<Vec<_>>();
        for stats in denoising_benchmark(model, &clean, &noisy, denoise)? {
            rows.push(SensitivityRow {
                noise_sigma: sigma,
                stats,
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope of `ys` against `xs`.
pub fn fitted_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
