//! Synthetic multiview data with block-structured correlations and known truth.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{MultiviewDataset, View};
use crate::dist::{draw_bernoulli, draw_beta, draw_categorical_log, draw_inverse_gamma, draw_normal, standard_normal};
use crate::error::{Error, Result};
use crate::predict::induced_covariance_blocks;
use crate::prelude::*;
use crate::rng::{RngStream, StreamFactory, VarKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub p: Vec<usize>,
    pub n: usize,
    pub n_test: usize,
    pub k_true: usize,
    pub k_m_true: Vec<usize>,
    /// Number of factors (shared and specific together) the response loads on.
    pub response_active: usize,
    /// Generate a response at all.
    pub supervised: bool,
    pub groups: usize,
    pub pi_group: f64,
    pub pi_sign: f64,
    pub pi_entry: f64,
    /// Group-assignment weights; empty means uniform.
    pub group_weights: Vec<f64>,
    pub v2_o: f64,
    pub r_damp: f64,
    /// Beta law of the hyper-loading magnitudes.
    pub hyper_loading: (f64, f64),
    /// Inverse-gamma law of the per-feature signal-to-noise ratios.
    pub snr: (f64, f64),
    /// Target `θᵀθ / σ_y²`.
    pub response_snr: f64,
    /// Switch shared columns off in some views (each column stays active in at least two).
    pub view_sparsity: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            p: vec![100, 200, 300],
            n: 50,
            n_test: 0,
            k_true: 4,
            k_m_true: vec![9, 10, 11],
            response_active: 0,
            supervised: false,
            groups: 10,
            pi_group: 0.5,
            pi_sign: 0.5,
            pi_entry: 0.9,
            group_weights: Vec::new(),
            v2_o: 0.1,
            r_damp: 1e-2,
            hyper_loading: (5.0, 3.0),
            snr: (10.0, 30.0),
            response_snr: 1.0,
            view_sparsity: true,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.p.is_empty() || self.p.contains(&0) {
            return bad("every view needs at least one feature");
        }
        if self.k_m_true.len() != self.p.len() {
            return bad("k_m_true needs one entry per view");
        }
        if self.n == 0 {
            return bad("n must be positive");
        }
        if self.groups == 0 {
            return bad("groups must be positive");
        }
        for (name, v) in [("pi_group", self.pi_group), ("pi_sign", self.pi_sign), ("pi_entry", self.pi_entry)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !self.group_weights.is_empty() {
            let sum: f64 = self.group_weights.iter().sum();
            if self.group_weights.len() != self.groups || self.group_weights.iter().any(|w| *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return bad("group_weights must be a probability vector of length `groups`");
            }
        }
        if !(self.v2_o > 0.0) || self.r_damp < 0.0 || !(self.response_snr > 0.0) {
            return bad("v2_o and response_snr must be positive, r_damp nonnegative");
        }
        let (a, b) = self.hyper_loading;
        let (c, d) = self.snr;
        if !(a > 0.0 && b > 0.0 && c > 0.0 && d > 0.0) {
            return bad("distribution parameters must be positive");
        }
        if self.supervised && self.response_active > self.k_true + self.k_m_true.iter().sum::<usize>() {
            return bad("response_active exceeds the number of factors");
        }
        Ok(())
    }
}

/// Ground-truth parameters behind a simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub lambda: Vec<DMatrix<f64>>,
    pub gamma: Vec<DMatrix<f64>>,
    pub sigma2: Vec<DVector<f64>>,
    pub mu: Vec<DVector<f64>>,
    /// For each view, which shared columns carry signal there.
    pub shared_active: Vec<Vec<bool>>,
    pub groups: Vec<Vec<usize>>,
    pub snr: Vec<DVector<f64>>,
    pub theta: DVector<f64>,
    pub theta_m: Vec<DVector<f64>>,
    pub mu_y: f64,
    pub sigma2_y: f64,
    /// Factor scores for training and test subjects, stacked `[η, φ_1, …, φ_M]`.
    pub factors_train: DMatrix<f64>,
    pub factors_test: DMatrix<f64>,
    /// Induced covariance blocks `cov(x_m, x_m')`.
    pub covariance: Vec<Vec<DMatrix<f64>>>,
}

impl SimTruth {
    /// Correlation block `(m, m')` derived from the stored covariances.
    pub fn correlation(&self, m: usize, m2: usize) -> DMatrix<f64> {
        crate::metrics::covariance_to_correlation(
            &self.covariance[m][m2],
            &self.covariance[m][m].diagonal(),
            &self.covariance[m2][m2].diagonal(),
        )
    }
}

pub struct LoadingDraw {
    pub matrix: DMatrix<f64>,
    pub groups: Vec<usize>,
    pub hyper: Vec<f64>,
}

/// One loading matrix with group-block signed structure.
pub fn gen_loading_matrix<R: Rng + ?Sized>(rng: &mut R, p: usize, k: usize, cfg: &SimConfig) -> Result<LoadingDraw> {
    let g_count = cfg.groups;
    let (a, b) = cfg.hyper_loading;
    let mut hyper = Vec::with_capacity(g_count);
    for g in 0..g_count {
        // groups are numbered from 1, so the first group is negative
        let sign = if (g + 1) % 2 == 0 { 1.0 } else { -1.0 };
        hyper.push(sign * draw_beta(rng, a, b)?);
    }
    let mut u = vec![false; g_count * k];
    let mut s = vec![false; g_count * k];
    for g in 0..g_count {
        for h in 0..k {
            u[g * k + h] = draw_bernoulli(rng, cfg.pi_group)?;
            s[g * k + h] = draw_bernoulli(rng, cfg.pi_sign)?;
        }
    }
    let log_w: Vec<f64> = if cfg.group_weights.is_empty() {
        vec![0.0; g_count]
    } else {
        cfg.group_weights.iter().map(|w| w.ln()).collect()
    };
    let kf = k.max(1) as f64;
    let sig_sd = (cfg.v2_o / kf).sqrt();
    let noise_sd = (cfg.r_damp * cfg.v2_o / kf).sqrt();
    let mut matrix = DMatrix::zeros(p, k);
    let mut groups = Vec::with_capacity(p);
    for j in 0..p {
        let g = draw_categorical_log(rng, &log_w)?;
        groups.push(g);
        for h in 0..k {
            let r = draw_bernoulli(rng, cfg.pi_entry)?;
            let l1 = hyper[g] / kf.sqrt() + sig_sd * standard_normal(rng);
            let l0 = noise_sd * standard_normal(rng);
            let gate = if u[g * k + h] && r { if s[g * k + h] { 1.0 } else { -1.0 } } else { 0.0 };
            matrix[(j, h)] = gate * l1 + l0;
        }
    }
    Ok(LoadingDraw { matrix, groups, hyper })
}

fn view_activity(rng: &mut RngStream, n_views: usize, k: usize, enabled: bool) -> Result<Vec<Vec<bool>>> {
    let mut act = vec![vec![true; k]; n_views];
    if !enabled || n_views < 2 {
        return Ok(act);
    }
    for h in 0..k {
        loop {
            let draw: Vec<bool> = (0..n_views).map(|_| draw_bernoulli(rng, 0.5)).collect::<Result<_>>()?;
            if draw.iter().filter(|&&b| b).count() >= 2 {
                for m in 0..n_views {
                    act[m][h] = draw[m];
                }
                break;
            }
        }
    }
    Ok(act)
}

fn factor_scores(rng: &mut RngStream, n: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, k, |_, _| standard_normal(rng))
}

/// Draws the truth and generates train and test sets from it.
pub fn gen_dataset(cfg: &SimConfig) -> Result<(MultiviewDataset, Option<MultiviewDataset>, SimTruth)> {
    cfg.validate()?;
    let mut rng = StreamFactory::new(cfg.seed).stream(VarKind::Simulation, 0, 0, 0);
    let n_views = cfg.p.len();
    let k = cfg.k_true;
    let shared_active = view_activity(&mut rng, n_views, k, cfg.view_sparsity)?;
    let mut lambda = Vec::with_capacity(n_views);
    let mut gamma = Vec::with_capacity(n_views);
    let mut groups = Vec::with_capacity(n_views);
    let mut sigma2 = Vec::with_capacity(n_views);
    let mut snr = Vec::with_capacity(n_views);
    let noise_sd = (cfg.r_damp * cfg.v2_o / k.max(1) as f64).sqrt();
    for m in 0..n_views {
        let p = cfg.p[m];
        let mut l = gen_loading_matrix(&mut rng, p, k, cfg)?;
        for h in 0..k {
            if !shared_active[m][h] {
                for j in 0..p {
                    l.matrix[(j, h)] = noise_sd * standard_normal(&mut rng);
                }
            }
        }
        let g = gen_loading_matrix(&mut rng, p, cfg.k_m_true[m], cfg)?;
        let mut s2 = DVector::zeros(p);
        let mut ratios = DVector::zeros(p);
        for j in 0..p {
            let signal = l.matrix.row(j).norm_squared() + g.matrix.row(j).norm_squared();
            let r = draw_inverse_gamma(&mut rng, cfg.snr.0, cfg.snr.1)?;
            ratios[j] = r;
            s2[j] = if signal > 0.0 { signal / r } else { 1.0 };
        }
        groups.push(l.groups);
        lambda.push(l.matrix);
        gamma.push(g.matrix);
        sigma2.push(s2);
        snr.push(ratios);
    }
    let k_tot = k + cfg.k_m_true.iter().sum::<usize>();
    let mut theta_all = DVector::zeros(k_tot);
    let mut sigma2_y = 1.0;
    if cfg.supervised {
        for idx in sample(&mut rng, k_tot, cfg.response_active).into_iter() {
            let mag = draw_beta(&mut rng, 5.0, 3.0)?;
            theta_all[idx] = if draw_bernoulli(&mut rng, 0.5)? { mag } else { -mag };
        }
        let ss = theta_all.norm_squared();
        if ss > 0.0 {
            sigma2_y = ss / cfg.response_snr;
        }
    }
    let theta = theta_all.rows(0, k).into_owned();
    let mut theta_m = Vec::with_capacity(n_views);
    let mut off = k;
    for &km in &cfg.k_m_true {
        theta_m.push(theta_all.rows(off, km).into_owned());
        off += km;
    }
    let mu: Vec<DVector<f64>> = cfg.p.iter().map(|&p| DVector::zeros(p)).collect();

    let factors_train = factor_scores(&mut rng, cfg.n, k_tot);
    let factors_test = factor_scores(&mut rng, cfg.n_test, k_tot);
    let covariance = induced_covariance_blocks(&lambda, &gamma, &sigma2);
    let truth = SimTruth {
        lambda,
        gamma,
        sigma2,
        mu,
        shared_active,
        groups,
        snr,
        theta: theta.clone(),
        theta_m,
        mu_y: 0.0,
        sigma2_y,
        factors_train,
        factors_test,
        covariance,
    };
    let train = generate(&mut rng, &truth, &truth.factors_train, cfg, "s")?;
    let test = if cfg.n_test > 0 { Some(generate(&mut rng, &truth, &truth.factors_test, cfg, "t")?) } else { None };
    Ok((train, test, truth))
}

fn generate(rng: &mut RngStream, truth: &SimTruth, f: &DMatrix<f64>, cfg: &SimConfig, prefix: &str) -> Result<MultiviewDataset> {
    let n = f.nrows();
    let k = truth.theta.len();
    let eta = f.columns(0, k);
    let mut views = Vec::with_capacity(truth.lambda.len());
    let mut off = k;
    for m in 0..truth.lambda.len() {
        let km = truth.gamma[m].ncols();
        let phi = f.columns(off, km);
        off += km;
        let mut x = eta * truth.lambda[m].transpose() + phi * truth.gamma[m].transpose();
        for j in 0..x.ncols() {
            let sd = truth.sigma2[m][j].sqrt();
            for i in 0..n {
                x[(i, j)] += truth.mu[m][j] + sd * standard_normal(rng);
            }
        }
        views.push(View::complete(format!("view{}", m + 1), x)?);
    }
    let response = if cfg.supervised {
        let mut theta_all = DVector::zeros(f.ncols());
        theta_all.rows_mut(0, k).copy_from(&truth.theta);
        let mut off = k;
        for t in &truth.theta_m {
            theta_all.rows_mut(off, t.len()).copy_from(t);
            off += t.len();
        }
        let sd = truth.sigma2_y.sqrt();
        let y = f * theta_all;
        Some(DVector::from_fn(n, |i, _| truth.mu_y + y[i] + draw_normal(rng, 0.0, sd * sd)))
    } else {
        None
    };
    let ids = (0..n).map(|i| format!("{prefix}{}", i + 1)).collect();
    MultiviewDataset::new(views, response, Some(ids))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_group_gate_leaves_noise_only() {
        let cfg = SimConfig { pi_group: 0.0, ..SimConfig::default() };
        let mut rng = StreamFactory::new(3).stream(VarKind::Test, 0, 0, 0);
        let l = gen_loading_matrix(&mut rng, 2000, 4, &cfg).unwrap();
        let var = l.matrix.iter().map(|v| v * v).sum::<f64>() / l.matrix.len() as f64;
        let expect = cfg.r_damp * cfg.v2_o / 4.0;
        assert!((var / expect - 1.0).abs() < 0.05);
    }

    #[test]
    fn snr_is_exact_and_seed_reproducible() {
        let cfg = SimConfig { p: vec![20, 30], k_m_true: vec![2, 3], k_true: 2, n: 10, ..SimConfig::default() };
        let (a, _, ta) = gen_dataset(&cfg).unwrap();
        let (b, _, _) = gen_dataset(&cfg).unwrap();
        assert_eq!(a.views[0].values, b.views[0].values);
        for m in 0..2 {
            for j in 0..cfg.p[m] {
                let signal = ta.lambda[m].row(j).norm_squared() + ta.gamma[m].row(j).norm_squared();
                assert!((signal / ta.sigma2[m][j] / ta.snr[m][j] - 1.0).abs() < 1e-12);
            }
        }
        for h in 0..2 {
            assert!(ta.shared_active.iter().filter(|a| a[h]).count() >= 2);
        }
    }

    #[test]
    fn response_snr_is_one() {
        let cfg = SimConfig {
            p: vec![10, 10],
            k_m_true: vec![2, 2],
            k_true: 3,
            n: 5,
            supervised: true,
            response_active: 4,
            ..SimConfig::default()
        };
        let (d, _, t) = gen_dataset(&cfg).unwrap();
        assert!(d.response.is_some());
        let ss = t.theta.norm_squared() + t.theta_m.iter().map(|v| v.norm_squared()).sum::<f64>();
        assert!((ss / t.sigma2_y - 1.0).abs() < 1e-12);
        let active = t.theta.iter().chain(t.theta_m.iter().flat_map(|v| v.iter())).filter(|v| **v != 0.0).count();
        assert_eq!(active, 4);
    }
}
