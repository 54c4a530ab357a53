//! Mini-batch Adam training.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Architecture, InputScaling, LossReport, LossTape, VaeError, VaeGrad, VaeModel};
use crate::nn::{AdamConfig, AdamState, Parameters};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the KL term; 0 trains a plain autoencoder.
    pub kl_weight: f64,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub shuffle: bool,
    /// Standardize each window by corpus mean/std before encoding.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            epochs: 1,
            kl_weight: 1.0,
            latent_dim: 2,
            hidden: vec![16, 8],
            seed: 0,
            shuffle: true,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), VaeError> {
        let bad = |m: String| Err(VaeError::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be > 0, got {}", self.lr));
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return bad(format!("kl_weight must be >= 0, got {}", self.kl_weight));
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be >= 1".into());
        }
        Ok(())
    }

    pub fn architecture(&self, input_dim: usize) -> Architecture {
        Architecture {
            input_dim,
            hidden: self.hidden.clone(),
            latent_dim: self.latent_dim,
        }
    }

    /// Optimizer steps per epoch for a corpus of `n` decays (drop-last).
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        (n / self.batch_size).max(usize::from(n > 0))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: VaeModel,
    pub history: Vec<LossReport>,
}

/// Builds a fresh model from `config` and trains it on `corpus`.
pub fn fit<X: AsRef<[f64]> + Sync>(corpus: &[X], config: &TrainConfig) -> Result<TrainOutcome, VaeError> {
    config.validate()?;
    let first = corpus.first().ok_or(VaeError::EmptyCorpus)?;
    let model = VaeModel::new(config.architecture(first.as_ref().len()), config.seed)?;
    train(model, corpus, config)
}

/// Trains `model` in place of its current parameters.
///
/// Each epoch visits a seeded permutation of the corpus in batches of
/// `batch_size` (a trailing partial batch is dropped). Every step averages
/// the single-sample loss and its gradient over the batch and applies one
/// Adam update.
pub fn train<X: AsRef<[f64]>>(mut model: VaeModel, corpus: &[X], config: &TrainConfig) -> Result<TrainOutcome, VaeError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(VaeError::EmptyCorpus);
    }
    let d = model.input_dim();
    for x in corpus {
        if x.as_ref().len() != d {
            return Err(VaeError::DimensionMismatch {
                what: "corpus decay length",
                expected: d,
                found: x.as_ref().len(),
            });
        }
    }
    if config.latent_dim != model.latent_dim() {
        return Err(VaeError::DimensionMismatch {
            what: "latent dimension",
            expected: model.latent_dim(),
            found: config.latent_dim,
        });
    }
    if config.standardize {
        let refs: Vec<&[f64]> = corpus.iter().map(AsRef::as_ref).collect();
        model.set_scaling(InputScaling::standardizing(&refs, d))?;
    }

    let k = model.latent_dim();
    let n = corpus.len();
    let batch = config.batch_size.min(n);
    let steps_per_epoch = config.steps_per_epoch(n);
    let mut adam = AdamState::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        &model.shapes(),
    );
    let mut grads = VaeGrad::zeros_like(&model);
    let mut tape = LossTape::default();
    let mut eps = vec![0.0; k];
    let mut history = Vec::with_capacity(steps_per_epoch * config.epochs);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.sort_unstable();
            order.shuffle(&mut stream(config.seed, Domain::Shuffle, epoch as u64));
        }
        for b in 0..steps_per_epoch {
            let step = history.len();
            let mut noise = stream(config.seed, Domain::TrainNoise, step as u64);
            grads.fill(0.0);
            let (mut total, mut nll, mut kl) = (0.0, 0.0, 0.0);
            for &i in &order[b * batch..(b + 1) * batch] {
                for e in eps.iter_mut() {
                    *e = StandardNormal.sample(&mut noise);
                }
                let report = match model.forward_loss(corpus[i].as_ref(), &eps, config.kl_weight, &mut tape) {
                    Ok(r) => r,
                    Err(VaeError::NonFinite { .. }) => return Err(VaeError::Diverged { step }),
                    Err(e) => return Err(e),
                };
                total += report.total;
                nll += report.nll;
                kl += report.kl;
                model.backward_loss(&tape, &mut grads)?;
            }
            let inv = 1.0 / batch as f64;
            let report = LossReport {
                total: total * inv,
                nll: nll * inv,
                kl: kl * inv,
                step,
            };
            if !report.total.is_finite() {
                return Err(VaeError::Diverged { step });
            }
            grads.scale(inv);
            let g = grads.tensors();
            adam.step(&mut model.tensors_mut(), &g)?;
            if !model.is_finite() {
                return Err(VaeError::Diverged { step });
            }
            history.push(report);
        }
    }
    Ok(TrainOutcome { model, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_ground_truth, SyntheticSpec};

    fn corpus(n: usize) -> Vec<Vec<f64>> {
        generate_ground_truth(&SyntheticSpec {
            n,
            seed: 5,
            ..Default::default()
        })
        .unwrap()
        .into_iter()
        .map(|d| d.windows)
        .collect()
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { lr: 0.0, ..Default::default() },
            TrainConfig { kl_weight: -1.0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn step_count_is_drop_last() {
        let c = TrainConfig::default();
        assert_eq!(c.steps_per_epoch(100_000), 3125);
        assert_eq!(c.steps_per_epoch(100), 3);
        assert_eq!(c.steps_per_epoch(10), 1);
        let out = fit(&corpus(100), &TrainConfig { epochs: 2, ..Default::default() }).unwrap();
        assert_eq!(out.history.len(), 6);
        assert_eq!(out.history.last().unwrap().step, 5);
    }

    #[test]
    fn empty_or_mismatched_corpus() {
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(matches!(fit(&empty, &TrainConfig::default()), Err(VaeError::EmptyCorpus)));
        let mut c = corpus(40);
        c[7].pop();
        assert!(matches!(fit(&c, &TrainConfig::default()), Err(VaeError::DimensionMismatch { .. })));
    }

    #[test]
    fn training_is_reproducible() {
        let c = corpus(640);
        let config = TrainConfig { seed: 3, ..Default::default() };
        let a = fit(&c, &config).unwrap();
        let b = fit(&c, &config).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
        let other = fit(&c, &TrainConfig { seed: 4, ..config }).unwrap();
        assert_ne!(a.model, other.model);
    }

    #[test]
    fn loss_decreases() {
        let c = corpus(20_000);
        let out = fit(&c, &TrainConfig { seed: 1, ..Default::default() }).unwrap();
        let h = &out.history;
        let mean = |s: &[LossReport]| s.iter().map(|r| r.total).sum::<f64>() / s.len() as f64;
        assert!(mean(&h[h.len() - 50..]) < 0.5 * mean(&h[..50]));
        assert!(h.iter().all(|r| r.kl >= 0.0));
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let c = corpus(320);
        let err = fit(&c, &TrainConfig { lr: 1e300, ..Default::default() }).unwrap_err();
        assert!(matches!(err, VaeError::Diverged { .. }), "{err:?}");
    }
}
