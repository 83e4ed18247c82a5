use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use jafar_core::config::ModelConfig;
use jafar_core::data::MultiviewDataset;
use jafar_core::fit::{fit_with, Preprocessing};
use jafar_core::gibbs::ChainArchive;
use jafar_core::metrics::{
    count_active_archive, covariance_to_correlation, effective_sample_size, frobenius_recon_error, posterior_mean_correlation,
    predictive_metrics, ActiveCounts, PredictiveMetrics,
};
use jafar_core::postprocess::postprocess_chain;
use jafar_core::predict::{predict_features, predict_response, PredictOptions};
use jafar_core::sim::{gen_dataset, SimConfig};
use log::info;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::archive::{read_archive, read_truth, write_archive, write_truth};
use crate::csvio::{read_dataset, write_dataset, write_json, write_table};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "jafar", version, about = "Bayesian multiview factor regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads (default: all available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration for this subcommand; defaults apply to anything left out.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multiview dataset and its ground truth.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Apply exp() to every simulated feature to produce non-Gaussian margins.
        #[arg(long)]
        monotone: bool,
    },
    /// Run the Gibbs sampler and store the chain.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Dataset directory (view CSVs plus optional response.csv).
        #[arg(long)]
        data: PathBuf,
        /// Model the views through empirical-CDF Gaussian copula margins.
        #[arg(long)]
        copula: bool,
        #[arg(long, default_value = ",")]
        delimiter: char,
    },
    /// Rotate and align the stored draws.
    Align {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        archive: PathBuf,
    },
    /// Predict the response (or one view) of new subjects.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Require the archive to have been fitted with copula margins.
        #[arg(long)]
        copula: bool,
        /// Predict the features of this view (0-based) from the other views instead of the response.
        #[arg(long)]
        feature_view: Option<usize>,
        #[arg(long, default_value = ",")]
        delimiter: char,
    },
    /// Summarise a chain against optional truth and test data.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        archive: PathBuf,
        /// Truth directory written by `simulate`.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Held-out dataset directory with a response.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, default_value = ",")]
        delimiter: char,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSettings {
    pub level: f64,
    pub draws_per_state: usize,
    pub seed: u64,
}

impl Default for PredictSettings {
    fn default() -> Self {
        let d = PredictOptions::default();
        Self { level: d.level, draws_per_state: d.draws_per_state, seed: d.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSettings {
    pub level: f64,
    pub seed: u64,
}

impl Default for MetricsSettings {
    fn default() -> Self {
        Self { level: 0.9, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AlignSettings {}

pub fn load_config<T: Default + for<'de> Deserialize<'de>>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| Error::Config { path: path.to_path_buf(), msg: e.to_string() })?;
    toml::from_str(&text).map_err(|e| Error::Config { path: path.to_path_buf(), msg: e.to_string() })
}

fn delimiter_byte(c: char) -> Result<u8> {
    u8::try_from(c).map_err(|_| Error::Usage(format!("delimiter `{c}` is not a single-byte character")))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn run(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Usage(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Simulate { common, monotone } => simulate(&common, monotone),
        Command::Fit { common, data, copula, delimiter } => fit(&common, &data, copula, delimiter_byte(delimiter)?),
        Command::Align { common, archive } => align(&common, &archive),
        Command::Predict { common, archive, data, copula, feature_view, delimiter } => {
            predict(&common, &archive, &data, copula, feature_view, delimiter_byte(delimiter)?)
        }
        Command::Metrics { common, archive, truth, test, delimiter } => {
            metrics(&common, &archive, truth.as_deref(), test.as_deref(), delimiter_byte(delimiter)?)
        }
    })
}

fn exp_views(data: &mut MultiviewDataset) {
    for v in &mut data.views {
        v.values.apply(|x| *x = x.exp());
    }
}

pub fn simulate(common: &Common, monotone: bool) -> Result<()> {
    let mut cfg: SimConfig = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let t0 = Instant::now();
    let (mut train, test, truth) = gen_dataset(&cfg)?;
    create_dir(&common.out)?;
    if monotone {
        exp_views(&mut train);
    }
    write_dataset(&common.out.join("train"), &train)?;
    if let Some(mut test) = test {
        if monotone {
            exp_views(&mut test);
        }
        write_dataset(&common.out.join("test"), &test)?;
    }
    write_truth(&common.out.join("truth"), &cfg, &truth)?;
    info!("simulated n={} p={:?} in {:.2}s", cfg.n, cfg.p, t0.elapsed().as_secs_f64());
    Ok(())
}

pub fn fit(common: &Common, data_dir: &Path, copula: bool, delimiter: u8) -> Result<()> {
    let mut cfg: ModelConfig = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.mcmc.seed = seed;
    }
    let config_path = common.config.clone().unwrap_or_default();
    cfg.validate().map_err(|e| Error::Config { path: config_path, msg: e.to_string() })?;
    let data = read_dataset(data_dir, delimiter)?;
    info!("fitting {:?}/{:?}: n={} p={:?}", cfg.family, cfg.prior_variant, data.n(), data.dims());
    let t0 = Instant::now();
    let every = cfg.mcmc.progress_every;
    let result = fit_with(&cfg, &data, copula, &mut |p| {
        if every > 0 && p.iteration % every == 0 {
            let (k, k_m) = p.state.ranks();
            info!("iteration {}/{} K={} K_m={:?} elapsed={:.1}s", p.iteration, p.total, k, k_m, t0.elapsed().as_secs_f64());
        }
    })?;
    let mut archive = result.archive;
    archive.elapsed_secs = t0.elapsed().as_secs_f64();
    write_archive(&common.out, &archive, &result.preprocessing)?;
    info!("stored {} draws in {} ({:.1}s)", archive.len(), common.out.display(), archive.elapsed_secs);
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct AlignReport {
    n_input: usize,
    n_aligned: usize,
    /// Archive iterations left out because their ranks differ from the modal ranks.
    excluded_iterations: Vec<usize>,
    pivot_iteration: usize,
    modal_k: usize,
    modal_k_m: Vec<usize>,
    objective_min: f64,
    objective_mean: f64,
    objective_max: f64,
    max_sweeps: usize,
    all_converged: bool,
}

pub fn align(common: &Common, archive_dir: &Path) -> Result<()> {
    let _: AlignSettings = load_config(common.config.as_deref())?;
    let stored = read_archive(archive_dir)?;
    let a = &stored.archive;
    if a.slim {
        return Err(Error::Usage("alignment needs factor draws; the archive was stored in slim mode".into()));
    }
    let aligned = postprocess_chain(a)?;
    let iterations: Vec<usize> = aligned.source.iter().map(|&i| a.iterations[i]).collect();
    let (modal_k, modal_k_m) = aligned.states[aligned.pivot].ranks();
    let obj = &aligned.objectives;
    let report = AlignReport {
        n_input: a.len(),
        n_aligned: aligned.states.len(),
        excluded_iterations: aligned.excluded.iter().map(|&i| a.iterations[i]).collect(),
        pivot_iteration: iterations[aligned.pivot],
        modal_k,
        modal_k_m,
        objective_min: obj.iter().cloned().fold(f64::INFINITY, f64::min),
        objective_mean: obj.iter().sum::<f64>() / obj.len().max(1) as f64,
        objective_max: obj.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        max_sweeps: aligned.max_sweeps,
        all_converged: aligned.all_converged,
    };
    let out = ChainArchive { iterations, states: aligned.states, ..a.clone() };
    write_archive(&common.out, &out, &stored.preprocessing)?;
    write_json(&common.out.join("align_report.json"), &report)?;
    info!("aligned {} of {} draws", report.n_aligned, report.n_input);
    Ok(())
}

pub fn predict(
    common: &Common,
    archive_dir: &Path,
    data_dir: &Path,
    copula: bool,
    feature_view: Option<usize>,
    delimiter: u8,
) -> Result<()> {
    let mut settings: PredictSettings = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        settings.seed = seed;
    }
    let stored = read_archive(archive_dir)?;
    if copula && stored.preprocessing.margins.is_none() {
        return Err(Error::Usage("--copula given but the archive was fitted without copula margins".into()));
    }
    if stored.archive.slim {
        return Err(Error::Usage("prediction needs the full draws; the archive was stored in slim mode".into()));
    }
    let data = read_dataset(data_dir, delimiter)?;
    let pre = &stored.preprocessing;
    let mut z = pre.apply(&data)?;
    z.response = None;
    create_dir(&common.out)?;
    match feature_view {
        Some(m) => {
            let fp = predict_features(&stored.archive, &z, m, false, settings.seed)?;
            let values = pre.view_from_latent(m, &fp.mean);
            let path = common.out.join(format!("{}_predicted.csv", data.views.get(m).map_or("view", |v| v.name.as_str())));
            write_table(&path, "id", &data.subject_ids, &data.views[m].feature_names, &values)?;
        }
        None => {
            let opts = PredictOptions { level: settings.level, draws_per_state: settings.draws_per_state, seed: settings.seed };
            let s = predict_response(&stored.archive, &z, &pre.record, &opts)?;
            let cols = ["mean", "sd", "lower", "upper"].map(String::from);
            let table = DMatrix::from_fn(data.n(), 4, |i, j| match j {
                0 => s.mean[i],
                1 => s.variance[i].sqrt(),
                2 => s.lower[i],
                _ => s.upper[i],
            });
            write_table(&common.out.join("predictions.csv"), "id", &data.subject_ids, &cols, &table)?;
            if let Some(d) = &s.draws {
                let names: Vec<String> = (1..=d.ncols()).map(|k| format!("draw{k}")).collect();
                write_table(&common.out.join("draws.csv"), "id", &data.subject_ids, &names, d)?;
            }
        }
    }
    info!("predicted {} subjects", data.n());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reconstruction {
    /// Rescaled Frobenius error of the within-view correlation, per view.
    pub intra_view: Vec<f64>,
    /// Same for the cross-view correlation blocks `(m, m')`, `m < m'`.
    pub cross_view: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EssSummary {
    /// Effective sample sizes as a percentage of the number of stored draws.
    pub shared_rank_pct: f64,
    pub mean_shared_loading_pct: f64,
    pub response_variance_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n_draws: usize,
    pub active: ActiveCounts,
    pub mean_rank_shared: f64,
    pub mean_rank_specific: Vec<f64>,
    pub reconstruction: Option<Reconstruction>,
    pub prediction: Option<PredictiveMetrics>,
    pub ess: EssSummary,
}

fn marginal_variances(v: &jafar_core::state::ViewState) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_fn(v.p(), |j, _| {
        v.lambda.row(j).norm_squared() + v.gamma.row(j).norm_squared() + v.sigma2[j]
    })
}

fn mean_cross_correlation(archive: &ChainArchive, m: usize, m2: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(archive.states[0].views[m].p(), archive.states[0].views[m2].p());
    for s in &archive.states {
        let (a, b) = (&s.views[m], &s.views[m2]);
        let c = &a.lambda * b.lambda.transpose();
        acc += covariance_to_correlation(&c, &marginal_variances(a), &marginal_variances(b));
    }
    acc / archive.states.len() as f64
}

pub fn compute_metrics(
    stored_archive: &ChainArchive,
    pre: &Preprocessing,
    truth: Option<&jafar_core::sim::SimTruth>,
    test: Option<&MultiviewDataset>,
    settings: &MetricsSettings,
) -> Result<MetricsReport> {
    let a = stored_archive;
    let active = count_active_archive(a)?;
    let t = a.len() as f64;
    let n_views = a.states[0].n_views();
    let mean_rank_shared = a.states.iter().map(|s| s.k() as f64).sum::<f64>() / t;
    let mean_rank_specific = (0..n_views).map(|m| a.states.iter().map(|s| s.k_m(m) as f64).sum::<f64>() / t).collect();
    let reconstruction = match truth {
        Some(tr) => {
            let mut intra = Vec::with_capacity(n_views);
            for m in 0..n_views {
                intra.push(frobenius_recon_error(&posterior_mean_correlation(a, m)?, &tr.correlation(m, m))?);
            }
            let mut cross = Vec::new();
            for m in 0..n_views {
                for m2 in m + 1..n_views {
                    cross.push((m, m2, frobenius_recon_error(&mean_cross_correlation(a, m, m2), &tr.correlation(m, m2))?));
                }
            }
            Some(Reconstruction { intra_view: intra, cross_view: cross })
        }
        None => None,
    };
    let prediction = match test {
        Some(test) if a.config.supervised => {
            let truth_y = test.response.clone().ok_or_else(|| jafar_core::Error::Data("test data has no response".into()))?;
            let mut z = pre.apply(test)?;
            z.response = None;
            let opts = PredictOptions { level: settings.level, draws_per_state: 0, seed: settings.seed };
            let s = predict_response(a, &z, &pre.record, &opts)?;
            Some(predictive_metrics(&s.mean, &s.lower, &s.upper, &truth_y)?)
        }
        _ => None,
    };
    let pct = |x: &[f64]| 100.0 * effective_sample_size(x) / x.len() as f64;
    let ranks: Vec<f64> = a.states.iter().map(|s| s.k() as f64).collect();
    let mean_loading: Vec<f64> = a
        .states
        .iter()
        .map(|s| {
            let (sum, cnt) = s.views.iter().fold((0.0, 0usize), |(acc, c), v| (acc + v.lambda.sum(), c + v.lambda.len()));
            sum / cnt.max(1) as f64
        })
        .collect();
    let sy: Option<Vec<f64>> = a.states.iter().map(|s| s.response.as_ref().map(|r| r.sigma2)).collect();
    let ess = EssSummary {
        shared_rank_pct: pct(&ranks),
        mean_shared_loading_pct: pct(&mean_loading),
        response_variance_pct: sy.map(|v| pct(&v)),
    };
    Ok(MetricsReport { n_draws: a.len(), active, mean_rank_shared, mean_rank_specific, reconstruction, prediction, ess })
}

pub fn metrics(common: &Common, archive_dir: &Path, truth: Option<&Path>, test: Option<&Path>, delimiter: u8) -> Result<()> {
    let mut settings: MetricsSettings = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        settings.seed = seed;
    }
    let stored = read_archive(archive_dir)?;
    if stored.archive.is_empty() {
        return Err(jafar_core::Error::Data("archive holds no draws".into()).into());
    }
    let truth = truth.map(read_truth).transpose()?.map(|(_, t)| t);
    let test = test.map(|d| read_dataset(d, delimiter)).transpose()?;
    let report = compute_metrics(&stored.archive, &stored.preprocessing, truth.as_ref(), test.as_ref(), &settings)?;
    create_dir(&common.out)?;
    write_json(&common.out.join("metrics.json"), &report)?;
    info!("metrics written to {}", common.out.display());
    Ok(())
}
