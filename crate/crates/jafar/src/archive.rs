//! Chain archive directories and simulation truth on disk.
//!
//! A chain archive holds `manifest.json`, `config.toml`, `preprocessing.json`,
//! `events.json`, `ranks.csv` and a block store with one entry per parameter
//! and stored iteration.

use std::fs;
use std::path::Path;

use jafar_core::config::{Family, ModelConfig};
use jafar_core::fit::Preprocessing;
use jafar_core::gibbs::{AdaptationEvent, ChainArchive, RankRecord};
use jafar_core::sim::{SimConfig, SimTruth};
use jafar_core::state::{ModelState, ResponseState, ViewState};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::csvio::{read_json, write_json};
use crate::error::{Error, Result};
use crate::store::{BlockReader, BlockWriter};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub family: Family,
    pub n_views: usize,
    pub dims: Vec<usize>,
    pub n_subjects: usize,
    pub supervised: bool,
    pub slim: bool,
    pub n_states: usize,
    pub iterations: Vec<usize>,
    pub elapsed_secs: f64,
    /// Full configuration with every default filled in.
    pub config: ModelConfig,
}

fn col(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

fn labels(v: &[usize]) -> DMatrix<f64> {
    DMatrix::from_iterator(v.len(), 1, v.iter().map(|&l| l as f64))
}

fn bits(v: &[bool]) -> DMatrix<f64> {
    DMatrix::from_iterator(v.len(), 1, v.iter().map(|&b| f64::from(u8::from(b))))
}

pub fn put_state(w: &mut BlockWriter, t: usize, s: &ModelState) -> Result<()> {
    for (m, v) in s.views.iter().enumerate() {
        w.put(&format!("v{m}.mu"), t, &col(v.mu.as_slice()))?;
        w.put(&format!("v{m}.lambda"), t, &v.lambda)?;
        w.put(&format!("v{m}.gamma"), t, &v.gamma)?;
        w.put(&format!("v{m}.sigma2"), t, &col(v.sigma2.as_slice()))?;
        w.put(&format!("v{m}.tau2"), t, &col(&v.tau2))?;
        w.put(&format!("v{m}.chi2"), t, &col(&v.chi2))?;
        w.put(&format!("v{m}.zeta"), t, &labels(&v.zeta))?;
        w.put(&format!("v{m}.delta"), t, &labels(&v.delta))?;
        w.put(&format!("v{m}.nu"), t, &col(&v.nu))?;
        w.put(&format!("v{m}.rho"), t, &col(&v.rho))?;
        w.put(&format!("v{m}.phi"), t, &v.phi)?;
    }
    w.put("eta", t, &s.eta)?;
    if let Some(r) = &s.response {
        w.put_slice("y.scalars", t, &[r.mu, r.sigma2, r.psi2_o, r.xi])?;
        w.put("y.theta", t, &col(r.theta.as_slice()))?;
        w.put("y.r", t, &bits(&r.r))?;
        for m in 0..s.n_views() {
            w.put(&format!("y.theta{m}"), t, &col(r.theta_m[m].as_slice()))?;
            w.put(&format!("y.r{m}"), t, &bits(&r.r_m[m]))?;
        }
    }
    Ok(())
}

fn to_labels(v: Vec<f64>) -> Vec<usize> {
    v.into_iter().map(|x| x as usize).collect()
}

fn to_bits(v: Vec<f64>) -> Vec<bool> {
    v.into_iter().map(|x| x != 0.0).collect()
}

pub fn get_state(r: &BlockReader, t: usize, family: Family, n_views: usize) -> Result<ModelState> {
    let mut views = Vec::with_capacity(n_views);
    for m in 0..n_views {
        let g = |what: &str| r.get(&format!("v{m}.{what}"), t);
        let gv = |what: &str| r.get_vec(&format!("v{m}.{what}"), t);
        views.push(ViewState {
            mu: DVector::from_vec(gv("mu")?),
            lambda: g("lambda")?,
            gamma: g("gamma")?,
            sigma2: DVector::from_vec(gv("sigma2")?),
            tau2: gv("tau2")?,
            chi2: gv("chi2")?,
            zeta: to_labels(gv("zeta")?),
            delta: to_labels(gv("delta")?),
            nu: gv("nu")?,
            rho: gv("rho")?,
            phi: g("phi")?,
        });
    }
    let response = if r.has("y.scalars", t) {
        let sc = r.get_vec("y.scalars", t)?;
        let mut theta_m = Vec::with_capacity(n_views);
        let mut r_m = Vec::with_capacity(n_views);
        for m in 0..n_views {
            theta_m.push(DVector::from_vec(r.get_vec(&format!("y.theta{m}"), t)?));
            r_m.push(to_bits(r.get_vec(&format!("y.r{m}"), t)?));
        }
        Some(ResponseState {
            mu: sc[0],
            theta: DVector::from_vec(r.get_vec("y.theta", t)?),
            theta_m,
            sigma2: sc[1],
            r: to_bits(r.get_vec("y.r", t)?),
            r_m,
            psi2_o: sc[2],
            xi: sc[3],
        })
    } else {
        None
    };
    Ok(ModelState { family, views, eta: r.get("eta", t)?, response })
}

fn write_ranks(path: &Path, ranks: &[RankRecord]) -> Result<()> {
    let n_views = ranks.first().map_or(0, |r| r.k_m.len());
    let mut out = String::from("iteration,k");
    for m in 0..n_views {
        out.push_str(&format!(",k_{}", m + 1));
    }
    out.push('\n');
    for r in ranks {
        out.push_str(&format!("{},{}", r.iteration, r.k));
        for k in &r.k_m {
            out.push_str(&format!(",{k}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_ranks(path: &Path) -> Result<Vec<RankRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let v: std::result::Result<Vec<usize>, _> = line.split(',').map(str::parse).collect();
        let v = v.map_err(|_| Error::parse(path, format!("bad line {}", n + 1)))?;
        if v.len() < 2 {
            return Err(Error::parse(path, format!("bad line {}", n + 1)));
        }
        out.push(RankRecord { iteration: v[0], k: v[1], k_m: v[2..].to_vec() });
    }
    Ok(out)
}

pub fn write_archive(dir: &Path, archive: &ChainArchive, preprocessing: &Preprocessing) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let first = archive.states.first();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: archive.seed,
        family: archive.config.family,
        n_views: preprocessing.record.view_means.len(),
        dims: preprocessing.record.view_means.iter().map(Vec::len).collect(),
        n_subjects: first.map_or(0, |s| s.n()),
        supervised: archive.config.supervised,
        slim: archive.slim,
        n_states: archive.states.len(),
        iterations: archive.iterations.clone(),
        elapsed_secs: archive.elapsed_secs,
        config: archive.config.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    let cfg_path = dir.join("config.toml");
    let cfg = toml::to_string(&archive.config).map_err(|e| Error::parse(&cfg_path, e))?;
    fs::write(&cfg_path, cfg).map_err(|e| Error::io(&cfg_path, e))?;
    write_json(&dir.join("preprocessing.json"), preprocessing)?;
    write_json(&dir.join("events.json"), &archive.events)?;
    write_ranks(&dir.join("ranks.csv"), &archive.ranks)?;
    let mut w = BlockWriter::create(dir)?;
    for (s, &t) in archive.states.iter().zip(&archive.iterations) {
        put_state(&mut w, t, s)?;
    }
    w.finish()
}

#[derive(Debug, Clone)]
pub struct StoredFit {
    pub manifest: Manifest,
    pub archive: ChainArchive,
    pub preprocessing: Preprocessing,
}

pub fn read_archive(dir: &Path) -> Result<StoredFit> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(Error::io(
            &manifest_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a chain archive (manifest.json missing)"),
        ));
    }
    let manifest: Manifest = read_json(&manifest_path)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::parse(&manifest_path, format!("unsupported format version {}", manifest.format_version)));
    }
    let preprocessing: Preprocessing = read_json(&dir.join("preprocessing.json"))?;
    let events: Vec<AdaptationEvent> = read_json(&dir.join("events.json"))?;
    let ranks = read_ranks(&dir.join("ranks.csv"))?;
    let reader = BlockReader::open(dir)?;
    let states = manifest
        .iterations
        .iter()
        .map(|&t| get_state(&reader, t, manifest.family, manifest.n_views))
        .collect::<Result<Vec<_>>>()?;
    let archive = ChainArchive {
        config: manifest.config.clone(),
        seed: manifest.seed,
        iterations: manifest.iterations.clone(),
        states,
        ranks,
        events,
        elapsed_secs: manifest.elapsed_secs,
        slim: manifest.slim,
    };
    Ok(StoredFit { manifest, archive, preprocessing })
}

/// Summary fields of a simulation truth that are not matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub format_version: u32,
    pub config: SimConfig,
    pub dims: Vec<usize>,
    pub shared_active: Vec<Vec<bool>>,
    pub groups: Vec<Vec<usize>>,
    pub mu_y: f64,
    pub sigma2_y: f64,
}

pub fn write_truth(dir: &Path, cfg: &SimConfig, truth: &SimTruth) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n_views = truth.lambda.len();
    let manifest = TruthManifest {
        format_version: FORMAT_VERSION,
        config: cfg.clone(),
        dims: truth.lambda.iter().map(|l| l.nrows()).collect(),
        shared_active: truth.shared_active.clone(),
        groups: truth.groups.clone(),
        mu_y: truth.mu_y,
        sigma2_y: truth.sigma2_y,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    let mut w = BlockWriter::create(dir)?;
    for m in 0..n_views {
        w.put(&format!("v{m}.lambda"), 0, &truth.lambda[m])?;
        w.put(&format!("v{m}.gamma"), 0, &truth.gamma[m])?;
        w.put(&format!("v{m}.sigma2"), 0, &col(truth.sigma2[m].as_slice()))?;
        w.put(&format!("v{m}.mu"), 0, &col(truth.mu[m].as_slice()))?;
        w.put(&format!("v{m}.snr"), 0, &col(truth.snr[m].as_slice()))?;
        w.put(&format!("y.theta{m}"), 0, &col(truth.theta_m[m].as_slice()))?;
        for m2 in 0..n_views {
            w.put(&format!("cov.{m}.{m2}"), 0, &truth.covariance[m][m2])?;
        }
    }
    w.put("y.theta", 0, &col(truth.theta.as_slice()))?;
    w.put("factors.train", 0, &truth.factors_train)?;
    w.put("factors.test", 0, &truth.factors_test)?;
    w.finish()
}

pub fn read_truth(dir: &Path) -> Result<(TruthManifest, SimTruth)> {
    let manifest: TruthManifest = read_json(&dir.join("manifest.json"))?;
    let r = BlockReader::open(dir)?;
    let n_views = manifest.dims.len();
    let per_view = |what: &str| -> Result<Vec<DMatrix<f64>>> { (0..n_views).map(|m| r.get(&format!("v{m}.{what}"), 0)).collect() };
    let as_vecs = |v: Vec<DMatrix<f64>>| v.into_iter().map(|m| DVector::from_column_slice(m.as_slice())).collect();
    let covariance = (0..n_views)
        .map(|m| (0..n_views).map(|m2| r.get(&format!("cov.{m}.{m2}"), 0)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let theta_m = (0..n_views)
        .map(|m| r.get_vec(&format!("y.theta{m}"), 0).map(DVector::from_vec))
        .collect::<Result<Vec<_>>>()?;
    let truth = SimTruth {
        lambda: per_view("lambda")?,
        gamma: per_view("gamma")?,
        sigma2: as_vecs(per_view("sigma2")?),
        mu: as_vecs(per_view("mu")?),
        shared_active: manifest.shared_active.clone(),
        groups: manifest.groups.clone(),
        snr: as_vecs(per_view("snr")?),
        theta: DVector::from_vec(r.get_vec("y.theta", 0)?),
        theta_m,
        mu_y: manifest.mu_y,
        sigma2_y: manifest.sigma2_y,
        factors_train: r.get("factors.train", 0)?,
        factors_test: r.get("factors.test", 0)?,
        covariance,
    };
    Ok((manifest, truth))
}
