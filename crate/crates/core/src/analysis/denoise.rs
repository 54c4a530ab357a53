use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{peak_snr, quantile_sorted, rmse, AnalysisError, PeakSnr};
use crate::rng::{stream, Domain, Rng};
use crate::vae::{reparametrize, VaeModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiseConfig {
    pub realizations: usize,
    /// Outlier threshold on reconstruction RMSE, mV/V.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            realizations: 100,
            threshold: 1.0,
            seed: 0,
        }
    }
}

/// Median reconstruction with its 95% interval and QC metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseResult {
    pub median: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    /// RMSE between the input and the median, mV/V.
    pub rmse: f64,
    /// `None` when the input has no dynamic range.
    pub peak_snr: Option<PeakSnr>,
    pub outlier: bool,
}

/// Decodes `realizations` posterior samples of `decay` and summarizes them
/// per window by the 0.025, 0.5 and 0.975 quantiles.
pub fn denoise(
    model: &VaeModel,
    decay: &[f64],
    realizations: usize,
    threshold: f64,
    rng: &mut Rng,
) -> Result<DenoiseResult, AnalysisError> {
    if realizations < 2 {
        return Err(AnalysisError::TooFew {
            what: "realizations",
            required: 2,
            found: realizations,
        });
    }
    let (mu, sigma) = model.encode(decay)?;
    let d = decay.len();
    let mut samples = vec![Vec::with_capacity(realizations); d];
    for _ in 0..realizations {
        let z = reparametrize(&mu, &sigma, rng);
        for (col, v) in samples.iter_mut().zip(model.decode(&z)?) {
            col.push(v);
        }
    }
    let mut median = Vec::with_capacity(d);
    let mut ci_low = Vec::with_capacity(d);
    let mut ci_high = Vec::with_capacity(d);
    for col in &mut samples {
        col.sort_by(f64::total_cmp);
        ci_low.push(quantile_sorted(col, 0.025));
        median.push(quantile_sorted(col, 0.5));
        ci_high.push(quantile_sorted(col, 0.975));
    }
    let err = rmse(decay, &median)?;
    Ok(DenoiseResult {
        peak_snr: peak_snr(decay, &median).ok(),
        rmse: err,
        outlier: err > threshold,
        median,
        ci_low,
        ci_high,
    })
}

/// Denoises every decay in parallel; decay `i` uses its own random stream,
/// so results do not depend on scheduling.
pub fn denoise_batch<X: AsRef<[f64]> + Sync>(
    model: &VaeModel,
    decays: &[X],
    config: &DenoiseConfig,
) -> Result<Vec<DenoiseResult>, AnalysisError> {
    decays
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = stream(config.seed, Domain::Denoise, i as u64);
            denoise(model, x.as_ref(), config.realizations, config.threshold, &mut rng)
        })
        .collect()
}

/// Peak S/N histogram over a survey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrHistogram {
    pub bin_width_db: f64,
    /// Lower edge of the first bin, a multiple of the bin width.
    pub first_edge_db: f64,
    pub counts: Vec<usize>,
    /// Perfect reconstructions.
    pub infinite: usize,
    /// Inputs without dynamic range.
    pub undefined: usize,
}

impl SnrHistogram {
    pub fn from_values(values: &[Option<PeakSnr>], bin_width_db: f64) -> Result<Self, AnalysisError> {
        if !(bin_width_db > 0.0) {
            return Err(AnalysisError::Invalid(format!(
                "bin width must be > 0, got {bin_width_db}"
            )));
        }
        let mut infinite = 0;
        let mut undefined = 0;
        let mut finite = Vec::new();
        for v in values {
            match v {
                Some(PeakSnr::Db(db)) => finite.push((db / bin_width_db).floor() as i64),
                Some(PeakSnr::Perfect) => infinite += 1,
                None => undefined += 1,
            }
        }
        let (first, counts) = match (finite.iter().min(), finite.iter().max()) {
            (Some(&lo), Some(&hi)) => {
                let mut counts = vec![0; (hi - lo + 1) as usize];
                for b in &finite {
                    counts[(b - lo) as usize] += 1;
                }
                (lo, counts)
            }
            _ => (0, Vec::new()),
        };
        Ok(Self {
            bin_width_db,
            first_edge_db: first as f64 * bin_width_db,
            counts,
            infinite,
            undefined,
        })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.infinite + self.undefined
    }

    /// Lower edges of the bins.
    pub fn edges(&self) -> Vec<f64> {
        (0..self.counts.len())
            .map(|i| self.first_edge_db + i as f64 * self.bin_width_db)
            .collect()
    }

    /// Centre of the most populated bin (first one on ties).
    pub fn mode_db(&self) -> Option<f64> {
        let max = *self.counts.iter().max()?;
        let i = self.counts.iter().position(|&c| c == max)?;
        Some(self.first_edge_db + (i as f64 + 0.5) * self.bin_width_db)
    }
}

/// Denoises a survey and bins each decay's peak S/N.
pub fn survey_snr_histogram<X: AsRef<[f64]> + Sync>(
    decays: &[X],
    model: &VaeModel,
    bin_width_db: f64,
    config: &DenoiseConfig,
) -> Result<SnrHistogram, AnalysisError> {
    if decays.is_empty() {
        return Err(AnalysisError::TooFew {
            what: "decays",
            required: 1,
            found: 0,
        });
    }
    let results = denoise_batch(model, decays, config)?;
    let values: Vec<Option<PeakSnr>> = results.iter().map(|r| r.peak_snr).collect();
    SnrHistogram::from_values(&values, bin_width_db)
}
