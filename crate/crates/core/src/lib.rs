//! Variational autoencoder toolkit for time-domain induced polarization
//! (IP) decay curves.
//!
//! - [`data`]: decay model, windowed chargeability, synthetic corpora, CSV.
//! - [`nn`]: dense layers with hand-written backpropagation and Adam.
//! - [`vae`]: the autoencoder, its loss, training, sampling and model files.
//! - [`filters`]: moving-average, EMA and Butterworth baselines.
//! - [`analysis`]: RMSE / peak S/N, Bayesian denoising, density charts,
//!   latent-space studies and benchmarks.
//! - [`cli`]: the `ipvae` command-line pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod data;
pub mod filters;
pub mod nn;
pub mod rng;
pub mod vae;

pub use analysis::{rmse, peak_snr, DenoiseResult, PeakSnr};
pub use data::{IpDecay, WindowScheme};
pub use vae::{LossReport, TrainConfig, VaeModel};
