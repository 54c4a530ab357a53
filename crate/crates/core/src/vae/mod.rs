//! Variational autoencoder for IP decays.
//!
//! ```text
//! x ─ h1 ─ h2 ─┬─ mu ──────┐
//!   (tanh)(tanh)└─ log σ² ─┴─ z = mu + ε·σ ─ h3 ─ h4 ─ h5 ─ x'
//!                                          (tanh)(tanh)(linear)
//! ```
//!
//! The loss for one decay is `‖x − x'‖² + β·KL(N(mu, σ²) ‖ N(0, I))`, with
//! the squared error summed over windows.

mod io;
mod train;

pub use io::{load, load_expecting, read_model, save, write_model, FORMAT_VERSION, MAGIC};
pub use train::{fit, train, TrainConfig, TrainOutcome};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{IpDecay, WindowScheme};
use crate::nn::{
    check_len, Activation, DenseLayer, ForwardCache, LayerGrad, Mlp, MlpGrad, NnError, Parameters,
};
use crate::rng::{stream, Domain, Rng};

#[derive(Debug, Error)]
pub enum VaeError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite values produced by {stage}")]
    NonFinite { stage: &'static str },
    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("not an IP-VAE model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {found} (expected {expected})")]
    UnsupportedVersion { expected: u32, found: u32 },
    #[error("model file is truncated")]
    Truncated,
    #[error("model checksum mismatch: file is corrupted")]
    Checksum,
    #[error("{what} mismatch: expected {expected}, file declares {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Layer widths of the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl Architecture {
    /// 20 → 16 → 8 → (K, K), decoder K → 8 → 16 → 20.
    pub fn new(input_dim: usize, latent_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![16, 8],
            latent_dim,
        }
    }

    pub fn validate(&self) -> Result<(), VaeError> {
        if self.input_dim == 0 || self.latent_dim == 0 {
            return Err(VaeError::InvalidConfig(
                "input and latent dimensions must be >= 1".into(),
            ));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(VaeError::InvalidConfig(
                "hidden widths must be non-empty and positive".into(),
            ));
        }
        Ok(())
    }

    fn encoder_widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.hidden.iter().copied())
            .collect()
    }

    fn decoder_widths(&self) -> Vec<usize> {
        std::iter::once(self.latent_dim)
            .chain(self.hidden.iter().rev().copied())
            .chain(std::iter::once(self.input_dim))
            .collect()
    }
}

/// Fixed per-window affine map applied before the encoder and undone after
/// the decoder. Identity unless training standardizes inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaling {
    pub fn identity(dim: usize) -> Self {
        Self {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Per-window mean and standard deviation of `corpus`.
    pub fn standardizing(corpus: &[&[f64]], dim: usize) -> Self {
        let n = corpus.len().max(1) as f64;
        let mut shift = vec![0.0; dim];
        for x in corpus {
            for (s, v) in shift.iter_mut().zip(*x) {
                *s += v;
            }
        }
        shift.iter_mut().for_each(|s| *s /= n);
        let mut scale = vec![0.0; dim];
        for x in corpus {
            for ((s, v), m) in scale.iter_mut().zip(*x).zip(&shift) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut scale {
            *s = (*s / n).sqrt();
            if !(*s > 1e-12) {
                *s = 1.0;
            }
        }
        Self { shift, scale }
    }

    pub fn is_identity(&self) -> bool {
        self.shift.iter().all(|&s| s == 0.0) && self.scale.iter().all(|&s| s == 1.0)
    }
}

/// One loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    /// Summed squared reconstruction error.
    pub nll: f64,
    pub kl: f64,
    pub step: usize,
}

/// Closed-form KL divergence of `N(mu, exp(logvar))` from `N(0, I)`.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

/// Same as [`kl_divergence`] with standard deviations instead of log-variances.
pub fn kl_divergence_sigma(mu: &[f64], sigma: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(sigma)
        .map(|(m, s)| 1.0 + (s * s).ln() - m * m - s * s)
        .sum::<f64>()
}

/// Summed squared error `‖x − x'‖²`.
pub fn squared_error(x: &[f64], recon: &[f64]) -> f64 {
    x.iter().zip(recon).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `z = mu + ε ⊙ sigma` with `ε ~ N(0, I)`.
pub fn reparametrize(mu: &[f64], sigma: &[f64], rng: &mut Rng) -> Vec<f64> {
    mu.iter()
        .zip(sigma)
        .map(|(m, s)| {
            let e: f64 = StandardNormal.sample(rng);
            m + e * s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    arch: Architecture,
    encoder: Mlp,
    mu_head: DenseLayer,
    logvar_head: DenseLayer,
    decoder: Mlp,
    scaling: InputScaling,
}

impl VaeModel {
    /// Glorot-initialized model; initialization is a function of `seed`.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self, VaeError> {
        arch.validate()?;
        let mut rng = stream(seed, Domain::Init, 0);
        let enc_widths = arch.encoder_widths();
        let encoder = Mlp::glorot(&enc_widths, &vec![Activation::Tanh; enc_widths.len() - 1], &mut rng);
        let last = *arch.hidden.last().expect("validated");
        let mu_head = DenseLayer::glorot(last, arch.latent_dim, &mut rng);
        let logvar_head = DenseLayer::glorot(last, arch.latent_dim, &mut rng);
        let dec_widths = arch.decoder_widths();
        let mut dec_acts = vec![Activation::Tanh; dec_widths.len() - 2];
        dec_acts.push(Activation::Identity);
        let decoder = Mlp::glorot(&dec_widths, &dec_acts, &mut rng);
        Ok(Self {
            scaling: InputScaling::identity(arch.input_dim),
            arch,
            encoder,
            mu_head,
            logvar_head,
            decoder,
        })
    }

    pub(crate) fn from_parts(
        arch: Architecture,
        encoder: Mlp,
        mu_head: DenseLayer,
        logvar_head: DenseLayer,
        decoder: Mlp,
        scaling: InputScaling,
    ) -> Self {
        Self {
            arch,
            encoder,
            mu_head,
            logvar_head,
            decoder,
            scaling,
        }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn scaling(&self) -> &InputScaling {
        &self.scaling
    }

    pub fn set_scaling(&mut self, scaling: InputScaling) -> Result<(), VaeError> {
        check_len("scaling shift", self.arch.input_dim, scaling.shift.len())?;
        check_len("scaling scale", self.arch.input_dim, scaling.scale.len())?;
        self.scaling = scaling;
        Ok(())
    }

    pub(crate) fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub(crate) fn heads(&self) -> (&DenseLayer, &DenseLayer) {
        (&self.mu_head, &self.logvar_head)
    }

    pub(crate) fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn scale_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.scaling.shift)
            .zip(&self.scaling.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn unscale_output(&self, y: &mut [f64]) {
        for ((v, m), s) in y.iter_mut().zip(&self.scaling.shift).zip(&self.scaling.scale) {
            *v = *v * s + m;
        }
    }

    /// Posterior mean and log-variance.
    pub fn encode_logvar(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), VaeError> {
        check_len("decay length", self.arch.input_dim, x.len())?;
        let hidden = self.encoder.forward(&self.scale_input(x))?;
        let mu = self.mu_head.forward(&hidden, Activation::Identity)?;
        let logvar = self.logvar_head.forward(&hidden, Activation::Identity)?;
        Ok((mu, logvar))
    }

    /// Posterior mean and standard deviation; deterministic.
    pub fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), VaeError> {
        let (mu, logvar) = self.encode_logvar(x)?;
        let sigma = logvar.iter().map(|lv| (0.5 * lv).exp()).collect();
        Ok((mu, sigma))
    }

    /// Decoder mean for latent vector `z`.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>, VaeError> {
        check_len("latent vector", self.arch.latent_dim, z.len())?;
        let mut y = self.decoder.forward(z)?;
        self.unscale_output(&mut y);
        Ok(y)
    }

    /// Single-sample loss with `ε` drawn from `rng`.
    pub fn loss(&self, x: &[f64], rng: &mut Rng, kl_weight: f64) -> Result<LossReport, VaeError> {
        let eps: Vec<f64> = (0..self.arch.latent_dim)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        let mut tape = LossTape::default();
        self.forward_loss(x, &eps, kl_weight, &mut tape)
    }

    /// Loss for a given auxiliary noise `eps`, recording what
    /// [`VaeModel::backward_loss`] needs.
    pub fn forward_loss(&self, x: &[f64], eps: &[f64], kl_weight: f64, tape: &mut LossTape) -> Result<LossReport, VaeError> {
        check_len("decay length", self.arch.input_dim, x.len())?;
        check_len("noise vector", self.arch.latent_dim, eps.len())?;
        tape.valid = false;
        let xs = self.scale_input(x);
        let hidden = self.encoder.forward_cached(&xs, &mut tape.encoder)?;
        if hidden.iter().any(|v| !v.is_finite()) {
            return Err(VaeError::NonFinite { stage: "encoder" });
        }
        tape.mu = self.mu_head.forward(hidden, Activation::Identity)?;
        tape.logvar = self.logvar_head.forward(hidden, Activation::Identity)?;
        if tape.mu.iter().any(|v| !v.is_finite()) {
            return Err(VaeError::NonFinite { stage: "mu head" });
        }
        tape.sigma = tape.logvar.iter().map(|lv| (0.5 * lv).exp()).collect();
        if tape.sigma.iter().any(|v| !v.is_finite()) {
            return Err(VaeError::NonFinite { stage: "log-variance head" });
        }
        tape.eps = eps.to_vec();
        let z: Vec<f64> = tape
            .mu
            .iter()
            .zip(&tape.sigma)
            .zip(eps)
            .map(|((m, s), e)| m + e * s)
            .collect();
        let mut recon = self.decoder.forward_cached(&z, &mut tape.decoder)?.to_vec();
        self.unscale_output(&mut recon);
        if recon.iter().any(|v| !v.is_finite()) {
            return Err(VaeError::NonFinite { stage: "decoder" });
        }
        let nll = squared_error(x, &recon);
        let kl = kl_divergence(&tape.mu, &tape.logvar);
        tape.x = x.to_vec();
        tape.recon = recon;
        tape.kl_weight = kl_weight;
        tape.valid = true;
        Ok(LossReport {
            total: nll + kl_weight * kl,
            nll,
            kl,
            step: 0,
        })
    }

    /// Accumulates the gradient of the last [`VaeModel::forward_loss`] into `grads`.
    pub fn backward_loss(&self, tape: &LossTape, grads: &mut VaeGrad) -> Result<(), VaeError> {
        if !tape.valid {
            return Err(NnError::MissingForwardState.into());
        }
        let beta = tape.kl_weight;
        let d_recon: Vec<f64> = tape
            .recon
            .iter()
            .zip(&tape.x)
            .zip(&self.scaling.scale)
            .map(|((r, x), s)| 2.0 * (r - x) * s)
            .collect();
        let dz = self.decoder.backward(&tape.decoder, &d_recon, &mut grads.decoder)?;

        let k = self.arch.latent_dim;
        let mut d_mu = vec![0.0; k];
        let mut d_logvar = vec![0.0; k];
        for i in 0..k {
            d_mu[i] = dz[i] + beta * tape.mu[i];
            let var = tape.sigma[i] * tape.sigma[i];
            d_logvar[i] = dz[i] * tape.eps[i] * 0.5 * tape.sigma[i] + beta * 0.5 * (var - 1.0);
        }

        let hidden = tape.encoder.output();
        let mut d_hidden = vec![0.0; hidden.len()];
        let mut d_hidden_lv = vec![0.0; hidden.len()];
        self.mu_head.backward_into(hidden, &tape.mu, Activation::Identity, &d_mu, &mut grads.mu_head, &mut d_hidden);
        self.logvar_head.backward_into(
            hidden,
            &tape.logvar,
            Activation::Identity,
            &d_logvar,
            &mut grads.logvar_head,
            &mut d_hidden_lv,
        );
        for (a, b) in d_hidden.iter_mut().zip(&d_hidden_lv) {
            *a += b;
        }
        self.encoder.backward(&tape.encoder, &d_hidden, &mut grads.encoder)?;
        Ok(())
    }

    /// Decodes `n` draws of `z ~ N(0, sigma_scale² I)`.
    pub fn sample_windows(&self, n: usize, sigma_scale: f64, seed: u64) -> Result<Vec<Vec<f64>>, VaeError> {
        let k = self.arch.latent_dim;
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, Domain::Sampling, i as u64);
                let z: Vec<f64> = (0..k)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        sigma_scale * e
                    })
                    .collect();
                self.decode(&z)
            })
            .collect()
    }

    /// Generative sampling as decays under `scheme`.
    pub fn sample(&self, n: usize, sigma_scale: f64, seed: u64, scheme: WindowScheme) -> Result<Vec<IpDecay>, VaeError> {
        check_len("scheme window count", self.arch.input_dim, scheme.count)?;
        let width = n.to_string().len();
        Ok(self
            .sample_windows(n, sigma_scale, seed)?
            .into_iter()
            .enumerate()
            .map(|(i, windows)| IpDecay {
                id: format!("g{i:0width$}"),
                windows,
                vp_mv: None,
                current_ma: None,
                label: None,
                scheme,
            })
            .collect())
    }
}

impl Parameters for VaeModel {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.encoder.tensors();
        t.extend(self.mu_head.tensors());
        t.extend(self.logvar_head.tensors());
        t.extend(self.decoder.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.encoder.tensors_mut();
        t.extend(self.mu_head.tensors_mut());
        t.extend(self.logvar_head.tensors_mut());
        t.extend(self.decoder.tensors_mut());
        t
    }
}

/// Gradient buffers shaped like a [`VaeModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct VaeGrad {
    pub encoder: MlpGrad,
    pub mu_head: LayerGrad,
    pub logvar_head: LayerGrad,
    pub decoder: MlpGrad,
}

impl VaeGrad {
    pub fn zeros_like(model: &VaeModel) -> Self {
        Self {
            encoder: MlpGrad::zeros_like(&model.encoder),
            mu_head: LayerGrad::zeros_like(&model.mu_head),
            logvar_head: LayerGrad::zeros_like(&model.logvar_head),
            decoder: MlpGrad::zeros_like(&model.decoder),
        }
    }
}

impl Parameters for VaeGrad {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.encoder.tensors();
        t.extend(self.mu_head.tensors());
        t.extend(self.logvar_head.tensors());
        t.extend(self.decoder.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.encoder.tensors_mut();
        t.extend(self.mu_head.tensors_mut());
        t.extend(self.logvar_head.tensors_mut());
        t.extend(self.decoder.tensors_mut());
        t
    }
}

/// Intermediate values of one loss evaluation.
#[derive(Debug, Clone, Default)]
pub struct LossTape {
    encoder: ForwardCache,
    decoder: ForwardCache,
    mu: Vec<f64>,
    logvar: Vec<f64>,
    sigma: Vec<f64>,
    eps: Vec<f64>,
    x: Vec<f64>,
    recon: Vec<f64>,
    kl_weight: f64,
    valid: bool,
}

impl LossTape {
    pub fn reconstruction(&self) -> &[f64] {
        &self.recon
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn model(k: usize, seed: u64) -> VaeModel {
        VaeModel::new(Architecture::new(20, k), seed).unwrap()
    }

    fn decay(seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, Domain::GroundTruth, 0);
        let m0 = rng.random_range(1.0..3.0);
        (0..20).map(|j| m0 * (-(j as f64) / 8.0).exp() + rng.random_range(-0.1..0.1)).collect()
    }

    #[test]
    fn kl_closed_forms() {
        assert_eq!(kl_divergence(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((kl_divergence(&[1.0, 1.0], &[0.0, 0.0]) - 1.0).abs() <= 1e-12);
        assert!((kl_divergence_sigma(&[1.0, 1.0], &[1.0, 1.0]) - 1.0).abs() <= 1e-12);
        assert_eq!(kl_divergence_sigma(&[0.0], &[1.0]), 0.0);
    }

    #[test]
    fn perfect_reconstruction_has_zero_nll() {
        let x = decay(1);
        assert_eq!(squared_error(&x, &x), 0.0);
    }

    #[test]
    fn encode_is_deterministic_with_positive_sigma() {
        let m = model(2, 4);
        let x = decay(2);
        let (mu, sigma) = m.encode(&x).unwrap();
        assert_eq!((mu.clone(), sigma.clone()), m.encode(&x).unwrap());
        assert!(sigma.iter().all(|&s| s > 0.0));
        assert_eq!(mu.len(), 2);
    }

    #[test]
    fn wrong_dimensions_are_rejected() {
        let m = model(2, 0);
        assert!(m.encode(&[1.0; 19]).is_err());
        assert!(m.decode(&[0.0; 3]).is_err());
        let mut tape = LossTape::default();
        assert!(m.forward_loss(&decay(0), &[0.0], 1.0, &mut tape).is_err());
        let mut grads = VaeGrad::zeros_like(&m);
        assert!(m.backward_loss(&LossTape::default(), &mut grads).is_err());
    }

    #[test]
    fn reparametrize_with_zero_sigma_is_mu() {
        let mut rng = stream(1, Domain::Sampling, 0);
        let mu = [0.3, -1.2, 4.0];
        assert_eq!(reparametrize(&mu, &[0.0; 3], &mut rng), mu.to_vec());
    }

    #[test]
    fn reparametrize_is_seeded() {
        let a = reparametrize(&[0.0; 4], &[1.0; 4], &mut stream(9, Domain::Sampling, 0));
        let b = reparametrize(&[0.0; 4], &[1.0; 4], &mut stream(9, Domain::Sampling, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn reparametrize_moments() {
        let mut rng = stream(11, Domain::Sampling, 0);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| reparametrize(&[0.0; 2], &[1.0; 2], &mut rng)).collect();
        for k in 0..2 {
            let mean = draws.iter().map(|z| z[k]).sum::<f64>() / n as f64;
            let std = (draws.iter().map(|z| (z[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            assert!(mean.abs() <= 0.02, "mean {mean}");
            assert!((0.98..=1.02).contains(&std), "std {std}");
        }
    }

    #[test]
    fn decode_is_deterministic_and_finite() {
        let m = model(3, 5);
        let z = [5.0, -5.0, 2.5];
        let a = m.decode(&z).unwrap();
        assert_eq!(a, m.decode(&z).unwrap());
        assert_eq!(a.len(), 20);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn loss_total_combines_terms() {
        let m = model(2, 3);
        let mut rng = stream(0, Domain::TrainNoise, 0);
        for beta in [0.0, 1.0, 4.0] {
            let r = m.loss(&decay(3), &mut rng, beta).unwrap();
            assert!(r.kl >= 0.0);
            assert!((r.total - (r.nll + beta * r.kl)).abs() <= 1e-12 * r.total.abs().max(1.0));
        }
    }

    #[test]
    fn sampling_collapses_to_decoded_origin() {
        let m = model(2, 8);
        let origin = m.decode(&[0.0, 0.0]).unwrap();
        for s in m.sample_windows(50, 1e-9, 1).unwrap() {
            for (a, b) in s.iter().zip(&origin) {
                assert!((a - b).abs() < 1e-6);
            }
        }
        assert_eq!(m.sample_windows(10, 1.0, 3).unwrap(), m.sample_windows(10, 1.0, 3).unwrap());
    }

    #[test]
    fn scaling_round_trips_through_decoder() {
        let corpus: Vec<Vec<f64>> = (0..50).map(decay).collect();
        let refs: Vec<&[f64]> = corpus.iter().map(Vec::as_slice).collect();
        let s = InputScaling::standardizing(&refs, 20);
        assert!(!s.is_identity());
        assert!(s.scale.iter().all(|&v| v > 0.0));
        let mut m = model(2, 1);
        assert!(m.set_scaling(InputScaling::identity(19)).is_err());
        m.set_scaling(s).unwrap();
        assert!(m.encode(&corpus[0]).is_ok());
    }

    /// Central-difference check of the full loss at fixed ε.
    pub(crate) fn max_relative_gradient_error(m: &VaeModel, x: &[f64], eps: &[f64], beta: f64) -> f64 {
        let mut tape = LossTape::default();
        m.forward_loss(x, eps, beta, &mut tape).unwrap();
        let mut grads = VaeGrad::zeros_like(m);
        m.backward_loss(&tape, &mut grads).unwrap();
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        let h = 1e-5;
        let mut probe = m.clone();
        let mut worst: f64 = 0.0;
        for (ti, g) in analytic.iter().enumerate() {
            for k in 0..g.len() {
                let orig = probe.tensors()[ti][k];
                probe.tensors_mut()[ti][k] = orig + h;
                let up = probe.forward_loss(x, eps, beta, &mut tape).unwrap().total;
                probe.tensors_mut()[ti][k] = orig - h;
                let down = probe.forward_loss(x, eps, beta, &mut tape).unwrap().total;
                probe.tensors_mut()[ti][k] = orig;
                let fd = (up - down) / (2.0 * h);
                let err = (g[k] - fd).abs() / (g[k].abs() + fd.abs()).max(1e-4);
                worst = worst.max(err);
            }
        }
        worst
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn loss_gradient_matches_finite_differences(seed in any::<u64>(), k in 1usize..5, beta in 0.0f64..2.0) {
            let m = model(k, seed);
            let mut rng = stream(seed, Domain::TrainNoise, 1);
            let eps: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
            let worst = max_relative_gradient_error(&m, &decay(seed), &eps, beta);
            prop_assert!(worst <= 1e-4, "relative error {worst}");
        }

        #[test]
        fn kl_is_non_negative(
            mu in prop::collection::vec(-10.0f64..10.0, 1..8),
            log_sigma in prop::collection::vec(-6.0f64..4.0, 8),
        ) {
            let sigma: Vec<f64> = log_sigma[..mu.len()].iter().map(|l| l.exp()).collect();
            prop_assert!(kl_divergence_sigma(&mu, &sigma) >= -1e-12);
        }
    }
}
