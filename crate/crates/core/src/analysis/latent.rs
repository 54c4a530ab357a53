use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    denoise_batch, density_chart, dlc_difference, pearson, reference_range, AnalysisError,
    DenoiseConfig,
};
use crate::data::average_chargeability;
use crate::vae::{fit, LossReport, TrainConfig, VaeModel};

/// Pearson correlation between each latent mean coordinate and the average
/// chargeability, across `decays`.
///
/// The outer error covers unusable input; each coordinate carries its own
/// error when its latent means have no variance.
pub fn latent_chargeability_correlation<X: AsRef<[f64]> + Sync>(
    model: &VaeModel,
    decays: &[X],
) -> Result<Vec<Result<f64, AnalysisError>>, AnalysisError> {
    if decays.len() < 3 {
        return Err(AnalysisError::TooFew {
            what: "decays",
            required: 3,
            found: decays.len(),
        });
    }
    let means: Vec<Vec<f64>> = decays
        .par_iter()
        .map(|d| model.encode(d.as_ref()).map(|(mu, _)| mu))
        .collect::<Result<_, _>>()?;
    let charge: Vec<f64> = decays.iter().map(|d| average_chargeability(d.as_ref())).collect();
    Ok((0..model.latent_dim())
        .map(|k| {
            let coord: Vec<f64> = means.iter().map(|m| m[k]).collect();
            pearson(&coord, &charge).ok_or(AnalysisError::UndefinedCorrelation { coordinate: k })
        })
        .collect())
}

/// One latent width's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub latent_dim: usize,
    /// Reconstruction term at the end of training (smoothed).
    pub nll: f64,
    /// KL term at the end of training (smoothed).
    pub kl: f64,
    /// Mean peak S/N of median reconstructions of the training set, dB.
    pub train_snr_db: f64,
    /// Mean RMSE of median reconstructions of the training set, mV/V.
    pub train_rmse: f64,
    /// Density-chart difference between prior samples and the corpus.
    pub dlc_diff: f64,
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub row: SweepRow,
    pub model: VaeModel,
    pub history: Vec<LossReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Trailing optimizer steps averaged for the reported NLL and KL.
    pub smoothing_steps: usize,
    /// Training decays used for the reconstruction metrics (0 = all).
    pub eval_limit: usize,
    pub realizations: usize,
    pub bins: usize,
    /// Prior samples for the density comparison (0 = corpus size).
    pub samples: usize,
    pub seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            smoothing_steps: 1000,
            eval_limit: 10_000,
            realizations: 100,
            bins: 100,
            samples: 0,
            seed: 0,
        }
    }
}

pub(crate) fn tail_mean(history: &[LossReport], steps: usize, f: impl Fn(&LossReport) -> f64) -> f64 {
    let tail = &history[history.len().saturating_sub(steps.max(1))..];
    tail.iter().map(f).sum::<f64>() / tail.len() as f64
}

/// Trains and evaluates one model per latent width, all with the same
/// seeds and configuration.
pub fn latent_sweep<X: AsRef<[f64]> + Sync>(
    corpus: &[X],
    ks: &[usize],
    config: &TrainConfig,
    options: &SweepOptions,
) -> Result<Vec<SweepRun>, AnalysisError> {
    if corpus.is_empty() {
        return Err(AnalysisError::TooFew {
            what: "decays",
            required: 1,
            found: 0,
        });
    }
    let range = reference_range(corpus, 0.995)?;
    let reference = density_chart(corpus, options.bins, range)?;
    let eval = match options.eval_limit {
        0 => corpus,
        n => &corpus[..n.min(corpus.len())],
    };
    let samples = match options.samples {
        0 => corpus.len(),
        n => n,
    };
    ks.iter()
        .map(|&k| {
            let run = || -> Result<SweepRun, AnalysisError> {
                let config = TrainConfig {
                    latent_dim: k,
                    ..config.clone()
                };
                let outcome = fit(corpus, &config)?;
                let model = outcome.model;
                let results = denoise_batch(
                    &model,
                    eval,
                    &DenoiseConfig {
                        realizations: options.realizations,
                        threshold: f64::INFINITY,
                        seed: options.seed,
                    },
                )?;
                let train_rmse = results.iter().map(|r| r.rmse).sum::<f64>() / results.len() as f64;
                let snrs: Vec<f64> = results
                    .iter()
                    .filter_map(|r| r.peak_snr.map(|s| s.db()))
                    .filter(|v| v.is_finite())
                    .collect();
                let train_snr_db = snrs.iter().sum::<f64>() / snrs.len().max(1) as f64;
                let generated = model.sample_windows(samples, 1.0, options.seed)?;
                let dlc_diff = dlc_difference(&reference, &density_chart(&generated, options.bins, range)?)?;
                let history = outcome.history;
                Ok(SweepRun {
                    row: SweepRow {
                        latent_dim: k,
                        nll: tail_mean(&history, options.smoothing_steps, |r| r.nll),
                        kl: tail_mean(&history, options.smoothing_steps, |r| r.kl),
                        train_snr_db,
                        train_rmse,
                        dlc_diff,
                    },
                    model,
                    history,
                })
            };
            run().map_err(|e| AnalysisError::Sweep {
                k,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::Architecture;

    fn decays(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let m0 = 1.0 + (i % 17) as f64;
                (0..20).map(|j| m0 * (-(j as f64) / (4.0 + (i % 5) as f64)).exp()).collect()
            })
            .collect()
    }

    #[test]
    fn correlation_needs_three_decays() {
        let m = VaeModel::new(Architecture::new(20, 2), 0).unwrap();
        assert!(latent_chargeability_correlation(&m, &decays(2)).is_err());
    }

    #[test]
    fn correlation_is_order_invariant() {
        let m = VaeModel::new(Architecture::new(20, 2), 1).unwrap();
        let mut d = decays(40);
        let a: Vec<f64> = latent_chargeability_correlation(&m, &d).unwrap().into_iter().map(Result::unwrap).collect();
        d.reverse();
        d.swap(3, 17);
        let b: Vec<f64> = latent_chargeability_correlation(&m, &d).unwrap().into_iter().map(Result::unwrap).collect();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_corpus_reports_per_coordinate() {
        let m = VaeModel::new(Architecture::new(20, 2), 1).unwrap();
        let same = vec![decays(1)[0].clone(); 5];
        let r = latent_chargeability_correlation(&m, &same).unwrap();
        assert!(r.iter().all(|c| matches!(c, Err(AnalysisError::UndefinedCorrelation { .. }))));
    }

    #[test]
    fn sweep_produces_finite_rows() {
        let corpus = decays(400);
        let runs = latent_sweep(
            &corpus,
            &[1, 3],
            &TrainConfig { seed: 2, ..Default::default() },
            &SweepOptions { smoothing_steps: 5, realizations: 10, bins: 20, ..Default::default() },
        )
        .unwrap();
        assert_eq!(runs.len(), 2);
        for (run, k) in runs.iter().zip([1, 3]) {
            let r = &run.row;
            assert_eq!(r.latent_dim, k);
            assert_eq!(run.model.latent_dim(), k);
            for v in [r.nll, r.kl, r.train_snr_db, r.train_rmse, r.dlc_diff] {
                assert!(v.is_finite());
            }
        }
    }

    #[test]
    fn sweep_errors_name_the_latent_width() {
        let corpus = decays(10);
        let err = latent_sweep(&corpus, &[2], &TrainConfig { epochs: 0, ..Default::default() }, &SweepOptions::default())
            .unwrap_err();
        assert!(matches!(err, AnalysisError::Sweep { k: 2, .. }));
        assert!(err.to_string().contains("latent dimension 2"));
    }
}
