//! Command-line pipeline: `synth`, `train`, `denoise`, `bench`, `sweep`,
//! `report`.
//!
//! Every command takes a mandatory `--seed` and writes its data files plus a
//! `<command>.json` echo of the resolved configuration and scalar metrics into
//! `--out`. Data files never contain timestamps, so reruns with the same
//! flags are byte-identical.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::analysis::{
    density_chart, denoise_batch, denoising_benchmark, dlc_difference, fitted_slope,
    latent_chargeability_correlation, latent_sweep, noise_sensitivity, reference_range,
    AnalysisError, DenoiseConfig, DensityChart, Method, PeakSnr, SnrHistogram, SweepOptions,
};
use crate::data::{
    generate_ground_truth, read_decays, synthesize, write_decays, DataError, IpDecay,
    SyntheticSpec, WindowScheme,
};
use crate::vae::{self, fit, LossReport, TrainConfig, VaeError, VaeModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

fn vae_code(e: &VaeError) -> i32 {
    match e {
        VaeError::Diverged { .. } => EXIT_DIVERGED,
        VaeError::Io(_) => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

fn analysis_code(e: &AnalysisError) -> i32 {
    match e {
        AnalysisError::Vae(v) => vae_code(v),
        AnalysisError::Sweep { source, .. } => analysis_code(source),
        _ => EXIT_VALIDATION,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io { .. } => EXIT_IO,
            CliError::Data(DataError::Io(_)) => EXIT_IO,
            CliError::Data(DataError::Csv(e)) if e.is_io_error() => EXIT_IO,
            CliError::Data(_) => EXIT_VALIDATION,
            CliError::Vae(e) => vae_code(e),
            CliError::Analysis(e) => analysis_code(e),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "ipvae", version, about = "IP decay VAE: synthesis, training, denoising and QC")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate ground-truth and contaminated synthetic decays.
    Synth(SynthArgs),
    /// Train a model on a decay CSV.
    Train(TrainArgs),
    /// Denoise decays and flag outliers.
    Denoise(DenoiseArgs),
    /// Compare the model against tuned filters on synthetic pairs.
    Bench(BenchArgs),
    /// Train and evaluate one model per latent width.
    Sweep(SweepArgs),
    /// Survey S/N histogram, latent scatter and density charts.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct Common {
    /// RNG seed (required).
    #[arg(long)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Gaussian noise std of the contaminated copy, mV/V.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Probability of a single-window spike per decay.
    #[arg(long, default_value_t = 0.0)]
    pub spike_prob: f64,
    #[arg(long, default_value_t = 1.0)]
    pub m0_min: f64,
    #[arg(long, default_value_t = 50.0)]
    pub m0_max: f64,
    /// Relaxation time bounds, s.
    #[arg(long, default_value_t = 0.05)]
    pub tau_min: f64,
    #[arg(long, default_value_t = 5.0)]
    pub tau_max: f64,
    #[arg(long, default_value_t = 0.2)]
    pub c_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_max: f64,
    #[arg(long, default_value_t = 120.0)]
    pub delay_ms: f64,
    #[arg(long, default_value_t = 40.0)]
    pub window_ms: f64,
    #[arg(long, default_value_t = 20)]
    pub windows: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelFlags {
    #[arg(long, default_value_t = 2)]
    pub latent: usize,
    /// KL weight; 0 trains a plain autoencoder.
    #[arg(long, default_value_t = 1.0)]
    pub kl_weight: f64,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Keep corpus order instead of reshuffling every epoch.
    #[arg(long)]
    pub no_shuffle: bool,
    /// Feed raw mV/V values to the encoder.
    #[arg(long)]
    pub raw_input: bool,
}

impl ModelFlags {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            kl_weight: self.kl_weight,
            latent_dim: self.latent,
            seed,
            shuffle: !self.no_shuffle,
            standardize: !self.raw_input,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Training decays.
    #[arg(long, alias = "input")]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct DenoiseFlags {
    #[arg(long, default_value_t = 100)]
    pub realizations: usize,
    /// Outlier threshold on reconstruction RMSE, mV/V.
    #[arg(long, default_value_t = 1.0)]
    pub threshold: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct DenoiseArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, alias = "corpus")]
    pub input: PathBuf,
    #[command(flatten)]
    pub denoise: DenoiseFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    /// Ground-truth decays; synthesized from `--seed` when omitted.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Number of synthetic pairs when `--truth` is omitted.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Noise level of the comparison table, mV/V.
    #[arg(long, default_value_t = 1.1)]
    pub noise: f64,
    /// Noise levels of the sensitivity sweep: `start:stop:step` or a comma list.
    #[arg(long, default_value = "0:3:0.5")]
    pub sigmas: String,
    #[command(flatten)]
    pub denoise: DenoiseFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, alias = "input")]
    pub corpus: PathBuf,
    /// Latent widths, comma separated.
    #[arg(long, default_value = "1,2,4,6", value_delimiter = ',')]
    pub latents: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub kl_weight: f64,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long)]
    pub raw_input: bool,
    #[arg(long, default_value_t = 100)]
    pub realizations: usize,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Training decays used for the reconstruction metrics (0 = all).
    #[arg(long, default_value_t = 10_000)]
    pub eval_limit: usize,
    /// Prior samples for the density comparison (0 = corpus size).
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    /// Trailing steps averaged for the reported NLL and KL.
    #[arg(long, default_value_t = 1000)]
    pub smoothing_steps: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, alias = "input")]
    pub corpus: PathBuf,
    /// Width of the S/N histogram bins, dB.
    #[arg(long, default_value_t = 2.0)]
    pub bin_width: f64,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Latent scales of the prior samples charted against the corpus.
    #[arg(long, default_value = "0.2,1,1.5", value_delimiter = ',')]
    pub sigma_scales: Vec<f64>,
    /// Prior samples per scale (0 = corpus size).
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    #[command(flatten)]
    pub denoise: DenoiseFlags,
}

/// Parses `start:stop:step` (inclusive) or `a,b,c`.
pub fn parse_sigmas(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Validation(format!("bad sigma list `{s}`: use start:stop:step or a,b,c"));
    let values: Vec<f64> = if s.contains(':') {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| start + i as f64 * step).collect()
    } else {
        s.split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?
    };
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(bad());
    }
    Ok(values)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let wrap = |e: csv::Error| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn snr_field(s: Option<PeakSnr>) -> String {
    match s {
        Some(PeakSnr::Db(db)) => num(db),
        Some(PeakSnr::Perfect) => "inf".into(),
        None => String::new(),
    }
}

fn write_echo(out: &Path, command: &str, config: &impl Serialize, metrics: Value) -> Result<(), CliError> {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let doc = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp_unix": timestamp,
        "config": config,
        "metrics": metrics,
    });
    let path = out.join(format!("{command}.json"));
    let text = serde_json::to_string_pretty(&doc).expect("json values serialize");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

fn load_decays(path: &Path) -> Result<Vec<IpDecay>, CliError> {
    let decays = read_decays(path).map_err(|e| match e {
        DataError::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        e => CliError::Data(e),
    })?;
    if decays.is_empty() {
        return Err(CliError::Validation(format!("{}: no decays", path.display())));
    }
    Ok(decays)
}

fn load_model(path: &Path) -> Result<VaeModel, CliError> {
    vae::load(path).map_err(|e| match e {
        VaeError::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        e => CliError::Vae(e),
    })
}

fn check_dim(model: &VaeModel, decays: &[IpDecay]) -> Result<(), CliError> {
    let d = decays[0].windows.len();
    if d != model.input_dim() {
        return Err(CliError::Validation(format!(
            "model expects {} windows, decays have {d}",
            model.input_dim()
        )));
    }
    Ok(())
}

fn denoise_config(flags: &DenoiseFlags, seed: u64) -> Result<DenoiseConfig, CliError> {
    if flags.realizations < 2 {
        return Err(CliError::Validation(format!(
            "--realizations must be >= 2, got {}",
            flags.realizations
        )));
    }
    if !(flags.threshold >= 0.0) {
        return Err(CliError::Validation(format!(
            "--threshold must be >= 0, got {}",
            flags.threshold
        )));
    }
    Ok(DenoiseConfig {
        realizations: flags.realizations,
        threshold: flags.threshold,
        seed,
    })
}

fn windows_of(decays: &[IpDecay]) -> Vec<&[f64]> {
    decays.iter().map(|d| d.windows.as_slice()).collect()
}

fn write_loss(path: &Path, history: &[LossReport]) -> Result<(), CliError> {
    write_rows(
        path,
        &strings(&["step", "total", "nll", "kl"]),
        history
            .iter()
            .map(|r| vec![r.step.to_string(), num(r.total), num(r.nll), num(r.kl)]),
    )
}

fn write_density(path: &Path, chart: &DensityChart) -> Result<(), CliError> {
    let edges = chart.bin_edges();
    write_rows(
        path,
        &strings(&["window", "bin", "lower", "upper", "density"]),
        (0..chart.windows).flat_map(|j| {
            let edges = &edges;
            chart.column(j).iter().enumerate().map(move |(b, &p)| {
                vec![
                    (j + 1).to_string(),
                    b.to_string(),
                    num(edges[b]),
                    num(edges[b + 1]),
                    num(p),
                ]
            })
        }),
    )
}

fn mode_label(kl_weight: f64) -> &'static str {
    if kl_weight == 0.0 {
        "AE"
    } else {
        "VAE"
    }
}

fn smoothed_final(history: &[LossReport]) -> f64 {
    let tail = &history[history.len().saturating_sub(1000)..];
    tail.iter().map(|r| r.total).sum::<f64>() / tail.len().max(1) as f64
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let scheme = WindowScheme::new(args.delay_ms, args.window_ms, args.windows)?;
    let spec = SyntheticSpec {
        n: args.n,
        m0_range: (args.m0_min, args.m0_max),
        tau_range: (args.tau_min, args.tau_max),
        c_range: (args.c_min, args.c_max),
        noise_sigma: args.noise,
        spike_prob: args.spike_prob,
        seed: args.common.seed,
        scheme,
    };
    let (truth, noisy) = synthesize(&spec)?;
    let out = &args.common.out;
    ensure_dir(out)?;
    write_decays(&truth, out.join("ground_truth.csv"))?;
    write_decays(&noisy, out.join("contaminated.csv"))?;
    write_echo(
        out,
        "synth",
        args,
        json!({ "decays": truth.len(), "spec": spec }),
    )
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let config = args.model.config(args.common.seed);
    config.validate()?;
    let decays = load_decays(&args.corpus)?;
    let corpus = windows_of(&decays);
    log::info!("training on {} decays", corpus.len());
    let outcome = fit(&corpus, &config)?;
    let out = &args.common.out;
    ensure_dir(out)?;
    let model_path = out.join("model.ipvae");
    vae::save(&outcome.model, &model_path)?;
    write_loss(&out.join("loss.csv"), &outcome.history)?;
    let last = outcome.history.last().copied();
    write_echo(
        out,
        "train",
        &json!({ "args": args, "resolved": config, "mode": mode_label(config.kl_weight) }),
        json!({
            "decays": corpus.len(),
            "steps": outcome.history.len(),
            "steps_per_epoch": config.steps_per_epoch(corpus.len()),
            "final_total": last.map(|r| r.total),
            "final_nll": last.map(|r| r.nll),
            "final_kl": last.map(|r| r.kl),
            "smoothed_final_total": smoothed_final(&outcome.history),
        }),
    )
}

pub fn cmd_denoise(args: &DenoiseArgs) -> Result<(), CliError> {
    let config = denoise_config(&args.denoise, args.common.seed)?;
    let model = load_model(&args.model)?;
    let decays = load_decays(&args.input)?;
    check_dim(&model, &decays)?;
    let results = denoise_batch(&model, &windows_of(&decays), &config)?;
    let d = model.input_dim();
    let mut header = strings(&["id", "rmse", "peak_snr_db", "outlier"]);
    for prefix in ["median", "ci_low", "ci_high"] {
        header.extend((1..=d).map(|j| format!("{prefix}_m{j}")));
    }
    let out = &args.common.out;
    ensure_dir(out)?;
    write_rows(
        &out.join("denoised.csv"),
        &header,
        decays.iter().zip(&results).map(|(decay, r)| {
            let mut row = vec![
                decay.id.clone(),
                num(r.rmse),
                snr_field(r.peak_snr),
                u8::from(r.outlier).to_string(),
            ];
            row.extend(r.median.iter().chain(&r.ci_low).chain(&r.ci_high).map(|&v| num(v)));
            row
        }),
    )?;
    let outliers = results.iter().filter(|r| r.outlier).count();
    let mean_rmse = results.iter().map(|r| r.rmse).sum::<f64>() / results.len() as f64;
    write_echo(
        out,
        "denoise",
        args,
        json!({ "decays": results.len(), "outliers": outliers, "mean_rmse": mean_rmse }),
    )
}

pub fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let config = denoise_config(&args.denoise, args.common.seed)?;
    let sigmas = parse_sigmas(&args.sigmas)?;
    if !(args.noise >= 0.0) {
        return Err(CliError::Validation(format!("--noise must be >= 0, got {}", args.noise)));
    }
    let model = load_model(&args.model)?;
    let truth = match &args.truth {
        Some(path) => load_decays(path)?,
        None => generate_ground_truth(&SyntheticSpec {
            n: args.n,
            seed: args.common.seed,
            scheme: WindowScheme::new(120.0, 40.0, model.input_dim())?,
            ..SyntheticSpec::default()
        })?,
    };
    check_dim(&model, &truth)?;
    let noisy = crate::data::contaminate(&truth, args.noise, 0.0, args.common.seed);
    let table = denoising_benchmark(&model, &windows_of(&truth), &windows_of(&noisy), &config)?;
    let sweep = noise_sensitivity(&model, &truth, &sigmas, args.common.seed, &config)?;

    let out = &args.common.out;
    ensure_dir(out)?;
    write_rows(
        &out.join("table1.csv"),
        &strings(&["method", "mean_rmse", "std_rmse"]),
        table
            .iter()
            .map(|s| vec![s.method.label().to_string(), num(s.mean), num(s.std)]),
    )?;
    write_rows(
        &out.join("noise_sweep.csv"),
        &strings(&["noise_sigma", "method", "mean_rmse", "std_rmse"]),
        sweep.iter().map(|r| {
            vec![
                num(r.noise_sigma),
                r.stats.method.label().to_string(),
                num(r.stats.mean),
                num(r.stats.std),
            ]
        }),
    )?;
    let slopes: serde_json::Map<String, Value> = Method::ALL
        .iter()
        .map(|&m| {
            let ys: Vec<f64> = sweep
                .iter()
                .filter(|r| r.stats.method == m)
                .map(|r| r.stats.mean)
                .collect();
            let slope = if sigmas.len() >= 2 { Some(fitted_slope(&sigmas, &ys)) } else { None };
            (m.label().to_string(), json!(slope))
        })
        .collect();
    let means: serde_json::Map<String, Value> = table
        .iter()
        .map(|s| (s.method.label().to_string(), json!(s.mean)))
        .collect();
    write_echo(
        out,
        "bench",
        &json!({ "args": args, "sigmas": sigmas }),
        json!({ "pairs": truth.len(), "mean_rmse": means, "slopes": slopes }),
    )
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    if args.latents.is_empty() || args.latents.contains(&0) {
        return Err(CliError::Validation("--latents must list widths >= 1".into()));
    }
    let config = TrainConfig {
        lr: args.lr,
        batch_size: args.batch_size,
        epochs: args.epochs,
        kl_weight: args.kl_weight,
        seed: args.common.seed,
        standardize: !args.raw_input,
        ..TrainConfig::default()
    };
    config.validate()?;
    let options = SweepOptions {
        smoothing_steps: args.smoothing_steps,
        eval_limit: args.eval_limit,
        realizations: args.realizations,
        bins: args.bins,
        samples: args.samples,
        seed: args.common.seed,
    };
    let decays = load_decays(&args.corpus)?;
    let runs = latent_sweep(&windows_of(&decays), &args.latents, &config, &options)?;
    let out = &args.common.out;
    ensure_dir(out)?;
    for run in &runs {
        let k = run.row.latent_dim;
        vae::save(&run.model, out.join(format!("model_k{k}.ipvae")))?;
        write_loss(&out.join(format!("loss_k{k}.csv")), &run.history)?;
    }
    write_rows(
        &out.join("sweep.csv"),
        &strings(&["latent_dim", "nll", "kl", "train_snr_db", "train_rmse", "dlc_diff"]),
        runs.iter().map(|run| {
            let r = &run.row;
            vec![
                r.latent_dim.to_string(),
                num(r.nll),
                num(r.kl),
                num(r.train_snr_db),
                num(r.train_rmse),
                num(r.dlc_diff),
            ]
        }),
    )?;
    let rows: Vec<_> = runs.iter().map(|r| &r.row).collect();
    write_echo(
        out,
        "sweep",
        &json!({ "args": args, "resolved": config, "options": options, "mode": mode_label(config.kl_weight) }),
        json!({ "rows": rows }),
    )
}

pub fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let config = denoise_config(&args.denoise, args.common.seed)?;
    if !(args.bin_width > 0.0) {
        return Err(CliError::Validation(format!("--bin-width must be > 0, got {}", args.bin_width)));
    }
    if args.sigma_scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(CliError::Validation("--sigma-scales must be finite and >= 0".into()));
    }
    let model = load_model(&args.model)?;
    let decays = load_decays(&args.corpus)?;
    check_dim(&model, &decays)?;
    let windows = windows_of(&decays);
    let out = &args.common.out;
    ensure_dir(out)?;

    let results = denoise_batch(&model, &windows, &config)?;
    let snrs: Vec<Option<PeakSnr>> = results.iter().map(|r| r.peak_snr).collect();
    let hist = SnrHistogram::from_values(&snrs, args.bin_width)?;
    let mut rows: Vec<Vec<String>> = hist
        .edges()
        .iter()
        .zip(&hist.counts)
        .map(|(&lo, &c)| vec!["bin".into(), num(lo), num(lo + hist.bin_width_db), c.to_string()])
        .collect();
    rows.push(vec!["perfect".into(), String::new(), String::new(), hist.infinite.to_string()]);
    rows.push(vec!["undefined".into(), String::new(), String::new(), hist.undefined.to_string()]);
    write_rows(
        &out.join("snr_histogram.csv"),
        &strings(&["kind", "lower_db", "upper_db", "count"]),
        rows,
    )?;

    let k = model.latent_dim();
    let encoded: Vec<(Vec<f64>, Vec<f64>)> = windows
        .iter()
        .map(|x| model.encode(x))
        .collect::<Result<_, _>>()?;
    let mut header = strings(&["id", "avg_chargeability"]);
    header.extend((1..=k).map(|i| format!("mu_{i}")));
    header.extend((1..=k).map(|i| format!("sigma_{i}")));
    write_rows(
        &out.join("latent.csv"),
        &header,
        decays.iter().zip(&encoded).map(|(decay, (mu, sigma))| {
            let mut row = vec![decay.id.clone(), num(decay.average_chargeability())];
            row.extend(mu.iter().chain(sigma).map(|&v| num(v)));
            row
        }),
    )?;
    let correlations: Vec<Option<f64>> = if windows.len() >= 3 {
        latent_chargeability_correlation(&model, &windows)?
            .into_iter()
            .map(Result::ok)
            .collect()
    } else {
        vec![None; k]
    };

    let range = reference_range(&windows, 0.995)?;
    let reference = density_chart(&windows, args.bins, range)?;
    write_density(&out.join("density_corpus.csv"), &reference)?;
    let samples = match args.samples {
        0 => windows.len(),
        n => n,
    };
    let mut dlc = serde_json::Map::new();
    for &scale in &args.sigma_scales {
        let generated = model.sample_windows(samples, scale, args.common.seed)?;
        let chart = density_chart(&generated, args.bins, range)?;
        write_density(&out.join(format!("density_sigma{scale}.csv")), &chart)?;
        dlc.insert(num(scale), json!(dlc_difference(&reference, &chart)?));
    }

    write_echo(
        out,
        "report",
        args,
        json!({
            "decays": decays.len(),
            "snr_mode_db": hist.mode_db(),
            "snr_total": hist.total(),
            "outliers": results.iter().filter(|r| r.outlier).count(),
            "latent_correlation": correlations,
            "density_range": range,
            "dlc_difference": dlc,
        }),
    )
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Denoise(a) => cmd_denoise(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    main_with(std::env::args_os())
}
