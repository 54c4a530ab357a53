//! Python module `ipvae_py`: synthetic corpora, baseline filters, metrics
//! and the IP-decay VAE.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use ipvae::analysis::{self, AnalysisError, DenoiseConfig, PeakSnr};
use ipvae::data::{self, DataError, SyntheticSpec};
use ipvae::filters::{self, FilterError, FilterKind, FilterSpec};
use ipvae::rng::{stream, Domain};
use ipvae::vae::{self, Architecture, TrainConfig, VaeError};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn vae_err(e: VaeError) -> PyErr {
    match e {
        VaeError::Io(e) => PyIOError::new_err(e.to_string()),
        e => value_err(e),
    }
}

fn data_err(e: DataError) -> PyErr {
    match e {
        DataError::Io(e) => PyIOError::new_err(e.to_string()),
        e => value_err(e),
    }
}

fn analysis_err(e: AnalysisError) -> PyErr {
    match e {
        AnalysisError::Vae(e) => vae_err(e),
        e => value_err(e),
    }
}

fn filter_err(e: FilterError) -> PyErr {
    value_err(e)
}

/// Mean of the window chargeabilities.
#[pyfunction]
fn average_chargeability(windows: Vec<f64>) -> f64 {
    data::average_chargeability(&windows)
}

/// Noise-free stretched-exponential decays, one list of windows per decay.
#[pyfunction]
#[pyo3(signature = (n, seed, m0_range=(1.0, 50.0), tau_range=(0.05, 5.0), c_range=(0.2, 1.0)))]
fn generate_ground_truth(
    n: usize,
    seed: u64,
    m0_range: (f64, f64),
    tau_range: (f64, f64),
    c_range: (f64, f64),
) -> PyResult<Vec<Vec<f64>>> {
    let spec = SyntheticSpec {
        n,
        m0_range,
        tau_range,
        c_range,
        seed,
        ..SyntheticSpec::default()
    };
    let decays = data::generate_ground_truth(&spec).map_err(data_err)?;
    Ok(decays.into_iter().map(|d| d.windows).collect())
}

/// Adds Gaussian noise and optional single-window spikes.
#[pyfunction]
#[pyo3(signature = (decays, noise_sigma, seed, spike_prob=0.0))]
fn contaminate(decays: Vec<Vec<f64>>, noise_sigma: f64, seed: u64, spike_prob: f64) -> PyResult<Vec<Vec<f64>>> {
    if !(noise_sigma >= 0.0) || !(0.0..=1.0).contains(&spike_prob) {
        return Err(PyValueError::new_err("need noise_sigma >= 0 and spike_prob in [0, 1]"));
    }
    let first = decays.first().map_or(20, Vec::len);
    let scheme = ipvae::WindowScheme::new(120.0, 40.0, first.max(2)).map_err(data_err)?;
    let wrapped = decays
        .into_iter()
        .enumerate()
        .map(|(i, w)| ipvae::IpDecay::new(i.to_string(), w, scheme))
        .collect::<Result<Vec<_>, _>>()
        .map_err(data_err)?;
    Ok(data::contaminate(&wrapped, noise_sigma, spike_prob, seed)
        .into_iter()
        .map(|d| d.windows)
        .collect())
}

/// Reads a decay CSV; returns `(ids, windows)`.
#[pyfunction]
fn read_decays(path: PathBuf) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
    let decays = data::read_decays(path).map_err(data_err)?;
    Ok(decays.into_iter().map(|d| (d.id, d.windows)).unzip())
}

#[pyfunction]
fn moving_average(x: Vec<f64>, order: usize) -> PyResult<Vec<f64>> {
    filters::moving_average(&x, order).map_err(filter_err)
}

#[pyfunction]
fn exponential_moving_average(x: Vec<f64>, alpha: f64) -> PyResult<Vec<f64>> {
    filters::exponential_moving_average(&x, alpha).map_err(filter_err)
}

#[pyfunction]
fn butterworth_lowpass(x: Vec<f64>, cutoff: f64) -> PyResult<Vec<f64>> {
    filters::butterworth_lowpass(&x, cutoff).map_err(filter_err)
}

fn filter_kind(name: &str) -> PyResult<FilterKind> {
    match name.to_ascii_lowercase().as_str() {
        "ma" | "moving_average" => Ok(FilterKind::MovingAverage),
        "ema" | "exponential_moving_average" => Ok(FilterKind::ExponentialMovingAverage),
        "butterworth" | "bw" => Ok(FilterKind::Butterworth),
        _ => Err(PyValueError::new_err(format!(
            "unknown filter `{name}` (expected ma, ema or butterworth)"
        ))),
    }
}

/// Grid-searches a filter against `reference`; returns `(hyperparameter, rmse)`.
#[pyfunction]
fn tune(kind: &str, noisy: Vec<f64>, reference: Vec<f64>) -> PyResult<(f64, f64)> {
    let (spec, err) = filters::tune(filter_kind(kind)?, &noisy, &reference).map_err(filter_err)?;
    let h = match spec {
        FilterSpec::MovingAverage(m) => m as f64,
        other => other.hyperparameter(),
    };
    Ok((h, err))
}

#[pyfunction]
fn rmse(x: Vec<f64>, x_prime: Vec<f64>) -> PyResult<f64> {
    analysis::rmse(&x, &x_prime).map_err(analysis_err)
}

/// Peak S/N in dB; `inf` for a perfect reconstruction.
#[pyfunction]
fn peak_snr(x: Vec<f64>, x_prime: Vec<f64>) -> PyResult<f64> {
    analysis::peak_snr(&x, &x_prime)
        .map(PeakSnr::db)
        .map_err(analysis_err)
}

/// KL divergence of `N(mu, sigma^2)` from the standard normal.
#[pyfunction]
fn kl_divergence(mu: Vec<f64>, sigma: Vec<f64>) -> PyResult<f64> {
    if mu.len() != sigma.len() {
        return Err(PyValueError::new_err("mu and sigma differ in length"));
    }
    Ok(vae::kl_divergence_sigma(&mu, &sigma))
}

#[pyclass(get_all, frozen, skip_from_py_object, module = "ipvae_py")]
#[derive(Clone)]
pub struct DenoiseResult {
    pub median: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub rmse: f64,
    /// `None` when the input has no dynamic range.
    pub peak_snr: Option<f64>,
    pub outlier: bool,
}

impl From<analysis::DenoiseResult> for DenoiseResult {
    fn from(r: analysis::DenoiseResult) -> Self {
        Self {
            median: r.median,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            rmse: r.rmse,
            peak_snr: r.peak_snr.map(PeakSnr::db),
            outlier: r.outlier,
        }
    }
}

#[pymethods]
impl DenoiseResult {
    fn __repr__(&self) -> String {
        let snr = self.peak_snr.map_or("None".to_string(), |v| format!("{v:.2}"));
        format!(
            "DenoiseResult(rmse={:.4}, peak_snr={snr}, outlier={})",
            self.rmse,
            if self.outlier { "True" } else { "False" }
        )
    }
}

#[pyclass(skip_from_py_object, module = "ipvae_py")]
#[derive(Clone)]
pub struct VaeModel {
    inner: ipvae::VaeModel,
}

#[pymethods]
impl VaeModel {
    /// Untrained model with Glorot-initialized weights.
    #[new]
    #[pyo3(signature = (latent_dim=2, input_dim=20, seed=0))]
    fn new(latent_dim: usize, input_dim: usize, seed: u64) -> PyResult<Self> {
        let inner = ipvae::VaeModel::new(Architecture::new(input_dim, latent_dim), seed).map_err(vae_err)?;
        Ok(Self { inner })
    }

    /// Trains a fresh model; returns `(model, [(total, nll, kl), ...])`.
    #[staticmethod]
    #[pyo3(signature = (corpus, seed, latent_dim=2, epochs=1, kl_weight=1.0, lr=1e-3, batch_size=32, standardize=true))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        corpus: Vec<Vec<f64>>,
        seed: u64,
        latent_dim: usize,
        epochs: usize,
        kl_weight: f64,
        lr: f64,
        batch_size: usize,
        standardize: bool,
    ) -> PyResult<(Self, Vec<(f64, f64, f64)>)> {
        let config = TrainConfig {
            lr,
            batch_size,
            epochs,
            kl_weight,
            latent_dim,
            seed,
            standardize,
            ..TrainConfig::default()
        };
        let outcome = vae::fit(&corpus, &config).map_err(vae_err)?;
        let history = outcome.history.iter().map(|r| (r.total, r.nll, r.kl)).collect();
        Ok((Self { inner: outcome.model }, history))
    }

    #[staticmethod]
    #[pyo3(signature = (path, expected_latent=None))]
    fn load(path: PathBuf, expected_latent: Option<usize>) -> PyResult<Self> {
        let inner = vae::load_expecting(path, expected_latent).map_err(vae_err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        vae::save(&self.inner, path).map_err(vae_err)
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    /// Posterior mean and standard deviation of the latent code.
    fn encode(&self, x: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        self.inner.encode(&x).map_err(vae_err)
    }

    fn decode(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.decode(&z).map_err(vae_err)
    }

    /// `(total, nll, kl)` for one decay with a seeded latent draw.
    #[pyo3(signature = (x, seed, kl_weight=1.0))]
    fn loss(&self, x: Vec<f64>, seed: u64, kl_weight: f64) -> PyResult<(f64, f64, f64)> {
        let mut rng = stream(seed, Domain::TrainNoise, 0);
        let r = self.inner.loss(&x, &mut rng, kl_weight).map_err(vae_err)?;
        Ok((r.total, r.nll, r.kl))
    }

    /// Decodes `n` prior draws scaled by `sigma_scale`.
    #[pyo3(signature = (n, seed, sigma_scale=1.0))]
    fn sample(&self, n: usize, seed: u64, sigma_scale: f64) -> PyResult<Vec<Vec<f64>>> {
        self.inner.sample_windows(n, sigma_scale, seed).map_err(vae_err)
    }

    #[pyo3(signature = (x, seed, realizations=100, threshold=1.0))]
    fn denoise(&self, x: Vec<f64>, seed: u64, realizations: usize, threshold: f64) -> PyResult<DenoiseResult> {
        let mut rng = stream(seed, Domain::Denoise, 0);
        analysis::denoise(&self.inner, &x, realizations, threshold, &mut rng)
            .map(Into::into)
            .map_err(analysis_err)
    }

    #[pyo3(signature = (decays, seed, realizations=100, threshold=1.0))]
    fn denoise_batch(
        &self,
        decays: Vec<Vec<f64>>,
        seed: u64,
        realizations: usize,
        threshold: f64,
    ) -> PyResult<Vec<DenoiseResult>> {
        let config = DenoiseConfig {
            realizations,
            threshold,
            seed,
        };
        let results = analysis::denoise_batch(&self.inner, &decays, &config).map_err(analysis_err)?;
        Ok(results.into_iter().map(Into::into).collect())
    }

    /// Pearson r between each latent mean coordinate and average chargeability.
    fn latent_correlation(&self, decays: Vec<Vec<f64>>) -> PyResult<Vec<Option<f64>>> {
        let r = analysis::latent_chargeability_correlation(&self.inner, &decays).map_err(analysis_err)?;
        Ok(r.into_iter().map(Result::ok).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "VaeModel(input_dim={}, latent_dim={})",
            self.inner.input_dim(),
            self.inner.latent_dim()
        )
    }
}

#[pymodule]
fn ipvae_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(average_chargeability, m)?)?;
    m.add_function(wrap_pyfunction!(generate_ground_truth, m)?)?;
    m.add_function(wrap_pyfunction!(contaminate, m)?)?;
    m.add_function(wrap_pyfunction!(read_decays, m)?)?;
    m.add_function(wrap_pyfunction!(moving_average, m)?)?;
    m.add_function(wrap_pyfunction!(exponential_moving_average, m)?)?;
    m.add_function(wrap_pyfunction!(butterworth_lowpass, m)?)?;
    m.add_function(wrap_pyfunction!(tune, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(peak_snr, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_class::<VaeModel>()?;
    m.add_class::<DenoiseResult>()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_names() {
        assert_eq!(filter_kind("MA").unwrap(), FilterKind::MovingAverage);
        assert_eq!(filter_kind("ema").unwrap(), FilterKind::ExponentialMovingAverage);
        assert_eq!(filter_kind("butterworth").unwrap(), FilterKind::Butterworth);
    }

    #[test]
    fn denoise_result_conversion() {
        let r = analysis::DenoiseResult {
            median: vec![1.0],
            ci_low: vec![0.5],
            ci_high: vec![1.5],
            rmse: 0.2,
            peak_snr: Some(PeakSnr::Perfect),
            outlier: false,
        };
        let py: DenoiseResult = r.into();
        assert_eq!(py.peak_snr, Some(f64::INFINITY));
        assert_eq!(py.median, vec![1.0]);
    }
}
