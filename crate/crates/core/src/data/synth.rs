//! Synthetic stretched-exponential decays and noise contamination.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DataError, IpDecay, WindowScheme};
use crate::rng::{stream, Domain};

/// Parameters of a synthetic corpus.
///
/// Ground truth follows `m0 * exp(-(t / tau)^c)` sampled at window
/// midpoints, with `(m0, tau, c)` uniform over the given ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    /// Amplitude range in mV/V.
    pub m0_range: (f64, f64),
    /// Relaxation time range in seconds.
    pub tau_range: (f64, f64),
    /// Stretching exponent range, within (0, 1].
    pub c_range: (f64, f64),
    /// Gaussian noise std in mV/V, used by [`synthesize`].
    pub noise_sigma: f64,
    pub spike_prob: f64,
    pub seed: u64,
    pub scheme: WindowScheme,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 10_000,
            m0_range: (1.0, 50.0),
            tau_range: (0.05, 5.0),
            c_range: (0.2, 1.0),
            noise_sigma: 0.0,
            spike_prob: 0.0,
            seed: 0,
            scheme: WindowScheme::default(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let check = |name: &str, (lo, hi): (f64, f64)| {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(DataError::InvalidSpec(format!(
                    "{name} range [{lo}, {hi}] is empty"
                )));
            }
            if lo <= 0.0 {
                return Err(DataError::InvalidSpec(format!(
                    "{name} range lower bound must be > 0, got {lo}"
                )));
            }
            Ok(())
        };
        check("m0", self.m0_range)?;
        check("tau", self.tau_range)?;
        check("c", self.c_range)?;
        if self.c_range.1 > 1.0 {
            return Err(DataError::InvalidSpec(format!(
                "stretching exponent must be <= 1, got {}",
                self.c_range.1
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(DataError::InvalidSpec(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.spike_prob) {
            return Err(DataError::InvalidSpec(format!(
                "spike_prob must lie in [0, 1], got {}",
                self.spike_prob
            )));
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl rand::Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Noise-free decays, reproducible from `spec.seed`.
pub fn generate_ground_truth(spec: &SyntheticSpec) -> Result<Vec<IpDecay>, DataError> {
    spec.validate()?;
    let times = spec.scheme.midpoints_s();
    let width = spec.n.to_string().len();
    let decays = (0..spec.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(spec.seed, Domain::GroundTruth, i as u64);
            let m0 = uniform(&mut rng, spec.m0_range);
            let tau = uniform(&mut rng, spec.tau_range);
            let c = uniform(&mut rng, spec.c_range);
            let windows = times
                .iter()
                .map(|t| m0 * (-(t / tau).powf(c)).exp())
                .collect();
            IpDecay {
                id: format!("s{i:0width$}"),
                windows,
                vp_mv: None,
                current_ma: None,
                label: None,
                scheme: spec.scheme,
            }
        })
        .collect();
    Ok(decays)
}

/// How noise and spikes are added to clean decays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contamination {
    pub noise_sigma: f64,
    pub spike_prob: f64,
    /// Spike magnitude range in mV/V. `None` means `[5s, 10s]` with
    /// `s = noise_sigma`, or 1 mV/V when the noise is zero.
    pub spike_range: Option<(f64, f64)>,
}

impl Contamination {
    pub fn new(noise_sigma: f64, spike_prob: f64) -> Self {
        Self {
            noise_sigma,
            spike_prob,
            spike_range: None,
        }
    }

    fn spike_bounds(&self) -> (f64, f64) {
        self.spike_range.unwrap_or_else(|| {
            let s = if self.noise_sigma > 0.0 {
                self.noise_sigma
            } else {
                1.0
            };
            (5.0 * s, 10.0 * s)
        })
    }
}

/// Adds i.i.d. Gaussian noise and occasional single-window spikes.
pub fn contaminate(decays: &[IpDecay], noise_sigma: f64, spike_prob: f64, seed: u64) -> Vec<IpDecay> {
    contaminate_with(decays, &Contamination::new(noise_sigma, spike_prob), seed)
}

pub fn contaminate_with(decays: &[IpDecay], how: &Contamination, seed: u64) -> Vec<IpDecay> {
    let (spike_lo, spike_hi) = how.spike_bounds();
    decays
        .par_iter()
        .enumerate()
        .map(|(i, decay)| {
            let mut rng = stream(seed, Domain::Contamination, i as u64);
            let mut windows: Vec<f64> = decay
                .windows
                .iter()
                .map(|&v| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    v + how.noise_sigma * e
                })
                .collect();
            if how.spike_prob > 0.0 && rng.random::<f64>() < how.spike_prob {
                let j = rng.random_range(0..windows.len());
                let magnitude = uniform(&mut rng, (spike_lo, spike_hi));
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                windows[j] += sign * magnitude;
            }
            decay.with_windows(windows)
        })
        .collect()
}

/// Ground truth and its contaminated copy (same ids), using the spec's
/// noise level and spike probability.
pub fn synthesize(spec: &SyntheticSpec) -> Result<(Vec<IpDecay>, Vec<IpDecay>), DataError> {
    let truth = generate_ground_truth(spec)?;
    let noisy = contaminate(&truth, spec.noise_sigma, spec.spike_prob, spec.seed);
    Ok((truth, noisy))
}
