//! Induced moments and out-of-sample prediction from a fitted chain.
//!
//! Factor moments condition on the observed features only; the response is
//! never conditioned on.

use alloc::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::data::{MultiviewDataset, StandardizationRecord};
use crate::dist::draw_normal;
use crate::error::{Error, Result};
use crate::gibbs::ChainArchive;
use crate::linalg::SpdFactor;
use crate::prelude::*;
use crate::rng::{StreamFactory, VarKind};
use crate::special::normal_cdf;
use crate::state::ModelState;

/// `cov(x_m) = ΛΛᵀ + ΓΓᵀ + diag σ²` and `cov(x_m, x_m') = Λ_m Λ_m'ᵀ`.
pub fn induced_covariance_blocks(
    lambda: &[DMatrix<f64>],
    gamma: &[DMatrix<f64>],
    sigma2: &[DVector<f64>],
) -> Vec<Vec<DMatrix<f64>>> {
    let n_views = lambda.len();
    (0..n_views)
        .map(|m| {
            (0..n_views)
                .map(|o| {
                    let mut c = &lambda[m] * lambda[o].transpose();
                    if m == o {
                        if gamma[m].ncols() > 0 {
                            c += &gamma[m] * gamma[m].transpose();
                        }
                        for j in 0..c.nrows() {
                            c[(j, j)] += sigma2[m][j];
                        }
                    }
                    c
                })
                .collect()
        })
        .collect()
}

pub fn induced_covariance(s: &ModelState) -> Vec<Vec<DMatrix<f64>>> {
    let lambda: Vec<_> = s.views.iter().map(|v| v.lambda.clone()).collect();
    let gamma: Vec<_> = s.views.iter().map(|v| v.gamma.clone()).collect();
    let sigma2: Vec<_> = s.views.iter().map(|v| v.sigma2.clone()).collect();
    induced_covariance_blocks(&lambda, &gamma, &sigma2)
}

/// Within-view induced correlation of view `m`.
pub fn induced_correlation(s: &ModelState, m: usize) -> DMatrix<f64> {
    let v = &s.views[m];
    let mut c = &v.lambda * v.lambda.transpose();
    if v.k_m() > 0 {
        c += &v.gamma * v.gamma.transpose();
    }
    for j in 0..c.nrows() {
        c[(j, j)] += v.sigma2[j];
    }
    let d = c.diagonal();
    crate::metrics::covariance_to_correlation(&c, &d, &d)
}

/// Gaussian moments of the stacked factors given one subject's features.
#[derive(Debug, Clone)]
pub struct FactorMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Precision of the stacked factors for the given per-view observed feature sets.
fn factor_precision(s: &ModelState, observed: &[Vec<usize>]) -> DMatrix<f64> {
    let kt = s.total_rank();
    let mut a = DMatrix::<f64>::identity(kt, kt);
    for (m, obs) in observed.iter().enumerate() {
        if obs.is_empty() {
            continue;
        }
        let b = s.stacked_loadings(m);
        let v = &s.views[m];
        for c in 0..kt {
            for r in c..kt {
                let mut acc = 0.0;
                for &j in obs {
                    acc += b[(j, r)] * b[(j, c)] / v.sigma2[j];
                }
                a[(r, c)] += acc;
                if r != c {
                    a[(c, r)] += acc;
                }
            }
        }
    }
    a
}

fn factor_linear_term(s: &ModelState, x: &[DVector<f64>], observed: &[Vec<usize>]) -> DVector<f64> {
    let mut u = DVector::zeros(s.total_rank());
    for (m, obs) in observed.iter().enumerate() {
        if obs.is_empty() {
            continue;
        }
        let b = s.stacked_loadings(m);
        let v = &s.views[m];
        for &j in obs {
            let w = (x[m][j] - v.mu[j]) / v.sigma2[j];
            u.axpy(w, &b.row(j).transpose(), 1.0);
        }
    }
    u
}

fn observed_sets(x: &[DVector<f64>]) -> Vec<Vec<usize>> {
    x.iter().map(|v| (0..v.len()).filter(|&j| !v[j].is_nan()).collect()).collect()
}

/// Moments of `[η, φ_1, …, φ_M] | x` with NaN marking missing features;
/// a fully missing view contributes nothing.
pub fn conditional_factor_moments(s: &ModelState, x: &[DVector<f64>]) -> Result<FactorMoments> {
    if x.len() != s.n_views() || x.iter().zip(&s.views).any(|(v, w)| v.len() != w.p()) {
        return Err(Error::arg("feature vector does not match the state dimensions"));
    }
    let observed = observed_sets(x);
    if observed.iter().all(|o| o.is_empty()) {
        return Err(Error::data("subject has no observed features"));
    }
    let factor = SpdFactor::new(&factor_precision(s, &observed))?;
    let u = factor_linear_term(s, x, &observed);
    Ok(FactorMoments { mean: factor.solve(&u), covariance: factor.inverse() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictOptions {
    /// Equal-tailed interval level.
    pub level: f64,
    /// Predictive draws kept per state and subject (0 keeps none).
    pub draws_per_state: usize,
    pub seed: u64,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self { level: 0.9, draws_per_state: 0, seed: 1 }
    }
}

/// Posterior predictive summaries on the original response scale.
#[derive(Debug, Clone)]
pub struct PredictiveSummary {
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub level: f64,
    /// Subjects × draws, when requested.
    pub draws: Option<DMatrix<f64>>,
}

fn subject_features(data: &MultiviewDataset, i: usize) -> Vec<DVector<f64>> {
    data.views
        .iter()
        .map(|v| DVector::from_fn(v.p(), |j, _| v.get(i, j).unwrap_or(f64::NAN)))
        .collect()
}

/// Subjects grouped by which features they observe.
fn group_by_pattern(data: &MultiviewDataset) -> Vec<(Vec<Vec<usize>>, Vec<usize>)> {
    let mut groups: BTreeMap<Vec<Vec<usize>>, Vec<usize>> = BTreeMap::new();
    for i in 0..data.n() {
        let key: Vec<Vec<usize>> =
            data.views.iter().map(|v| (0..v.p()).filter(|&j| v.mask[(i, j)]).collect()).collect();
        groups.entry(key).or_default().push(i);
    }
    groups.into_iter().collect()
}

fn check_new_data(archive: &ChainArchive, data: &MultiviewDataset) -> Result<()> {
    let Some(s) = archive.states.first() else {
        return Err(Error::arg("archive holds no states"));
    };
    if data.n_views() != s.n_views() || data.views.iter().zip(&s.views).any(|(v, w)| v.p() != w.p()) {
        return Err(Error::data("new data does not match the fitted dimensions"));
    }
    for i in 0..data.n() {
        if data.views.iter().all(|v| (0..v.p()).all(|j| !v.mask[(i, j)])) {
            return Err(Error::data(format!("subject `{}` has no observed features", data.subject_ids[i])));
        }
    }
    Ok(())
}

/// Per state: conditional means of the stacked factors (n × K̃) and the
/// matching covariance for each pattern group.
fn state_factor_means(s: &ModelState, data: &MultiviewDataset, groups: &[(Vec<Vec<usize>>, Vec<usize>)]) -> Result<(DMatrix<f64>, Vec<(DMatrix<f64>, Vec<usize>)>)> {
    let kt = s.total_rank();
    let mut means = DMatrix::zeros(data.n(), kt);
    let mut covs = Vec::with_capacity(groups.len());
    for (observed, subjects) in groups {
        let factor = SpdFactor::new(&factor_precision(s, observed))?;
        for &i in subjects {
            let x = subject_features(data, i);
            let m = factor.solve(&factor_linear_term(s, &x, observed));
            means.row_mut(i).copy_from(&m.transpose());
        }
        covs.push((factor.inverse(), subjects.clone()));
    }
    Ok((means, covs))
}

fn mixture_quantile(means: &[f64], sds: &[f64], q: f64) -> f64 {
    let cdf = |x: f64| means.iter().zip(sds).map(|(m, s)| normal_cdf((x - m) / s)).sum::<f64>() / means.len() as f64;
    let spread = sds.iter().cloned().fold(0.0, f64::max);
    let mut lo = means.iter().cloned().fold(f64::INFINITY, f64::min) - 10.0 * spread;
    let mut hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 10.0 * spread;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Predicts the response of new subjects (already on the modelling scale).
///
/// Each state contributes `N(μ_y + θ̃ᵀ E[η̃|x], θ̃ᵀ Cov[η̃|x] θ̃ + σ_y²)`; the
/// point prediction averages the state means and the interval inverts the
/// resulting normal mixture.
pub fn predict_response(
    archive: &ChainArchive,
    data: &MultiviewDataset,
    record: &StandardizationRecord,
    opts: &PredictOptions,
) -> Result<PredictiveSummary> {
    check_new_data(archive, data)?;
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::arg("interval level must lie in (0, 1)"));
    }
    let n = data.n();
    let t_count = archive.states.len();
    let groups = group_by_pattern(data);
    let mut state_mean = DMatrix::zeros(n, t_count);
    let mut state_sd = DMatrix::zeros(n, t_count);
    let factory = StreamFactory::new(opts.seed);
    let mut draws = if opts.draws_per_state > 0 { Some(DMatrix::zeros(n, t_count * opts.draws_per_state)) } else { None };
    for (t, s) in archive.states.iter().enumerate() {
        let r = s.response.as_ref().ok_or_else(|| Error::arg("archive was fitted without a response"))?;
        let theta = r.stacked_theta();
        let (means, covs) = state_factor_means(s, data, &groups)?;
        let fit = &means * &theta;
        for (cov, subjects) in &covs {
            let v = (theta.transpose() * cov * &theta)[(0, 0)].max(0.0) + r.sigma2;
            for &i in subjects {
                state_mean[(i, t)] = r.mu + fit[i];
                state_sd[(i, t)] = v.sqrt();
            }
        }
        if let Some(d) = draws.as_mut() {
            let mut rng = factory.stream(VarKind::Prediction, 0, 0, t);
            for i in 0..n {
                for k in 0..opts.draws_per_state {
                    let sd = state_sd[(i, t)];
                    d[(i, t * opts.draws_per_state + k)] = draw_normal(&mut rng, state_mean[(i, t)], sd * sd);
                }
            }
        }
    }
    let alpha = 0.5 * (1.0 - opts.level);
    let mut out = PredictiveSummary {
        mean: DVector::zeros(n),
        variance: DVector::zeros(n),
        lower: DVector::zeros(n),
        upper: DVector::zeros(n),
        level: opts.level,
        draws: None,
    };
    let scale = record.response_sd;
    for i in 0..n {
        let m: Vec<f64> = state_mean.row(i).iter().cloned().collect();
        let sd: Vec<f64> = state_sd.row(i).iter().cloned().collect();
        let mean = m.iter().sum::<f64>() / t_count as f64;
        let var = sd.iter().map(|s| s * s).sum::<f64>() / t_count as f64
            + m.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t_count as f64;
        out.mean[i] = record.unscale_response(mean);
        out.variance[i] = var * scale * scale;
        out.lower[i] = record.unscale_response(mixture_quantile(&m, &sd, alpha));
        out.upper[i] = record.unscale_response(mixture_quantile(&m, &sd, 1.0 - alpha));
    }
    out.draws = draws.map(|d| d.map(|z| record.unscale_response(z)));
    Ok(out)
}

/// Conditional predictions of view `target` from the remaining views, on the modelling scale.
#[derive(Debug, Clone)]
pub struct FeaturePrediction {
    /// Posterior mean per subject and feature (n × p_target).
    pub mean: DMatrix<f64>,
    /// One predictive draw per state (each n × p_target), when requested.
    pub draws: Vec<DMatrix<f64>>,
}

pub fn predict_features(
    archive: &ChainArchive,
    data: &MultiviewDataset,
    target: usize,
    keep_draws: bool,
    seed: u64,
) -> Result<FeaturePrediction> {
    if target >= data.n_views() {
        return Err(Error::arg("target view out of range"));
    }
    let mut masked = data.clone();
    masked.views[target].mask.fill(false);
    masked.views[target].values.fill(f64::NAN);
    check_new_data(archive, &masked)?;
    let n = data.n();
    let p = masked.views[target].p();
    let groups = group_by_pattern(&masked);
    let factory = StreamFactory::new(seed);
    let mut mean = DMatrix::zeros(n, p);
    let mut draws = Vec::new();
    for (t, s) in archive.states.iter().enumerate() {
        let (means, covs) = state_factor_means(s, &masked, &groups)?;
        let b = s.stacked_loadings(target);
        let v = &s.views[target];
        let mut fit = &means * b.transpose();
        for j in 0..p {
            fit.column_mut(j).add_scalar_mut(v.mu[j]);
        }
        mean += &fit;
        if keep_draws {
            let mut rng = factory.stream(VarKind::Prediction, target + 1, 0, t);
            let mut d = fit.clone();
            for (cov, subjects) in &covs {
                let chol = SpdFactor::new(cov)?;
                for &i in subjects {
                    let z = crate::dist::standard_normal_vector(&mut rng, cov.nrows());
                    let f = chol.lower() * z;
                    let shift = &b * f;
                    for j in 0..p {
                        d[(i, j)] += shift[j] + draw_normal(&mut rng, 0.0, v.sigma2[j]);
                    }
                }
            }
            draws.push(d);
        }
    }
    mean /= archive.states.len() as f64;
    Ok(FeaturePrediction { mean, draws })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Family;
    use crate::state::ViewState;

    fn one_view_state(lambda: f64, gamma: Option<f64>) -> ModelState {
        let km = usize::from(gamma.is_some());
        ModelState {
            family: if km > 0 { Family::Jafar } else { Family::Jfr },
            views: vec![ViewState {
                mu: DVector::zeros(1),
                lambda: DMatrix::from_element(1, 1, lambda),
                gamma: DMatrix::from_element(1, km, gamma.unwrap_or(0.0)),
                sigma2: DVector::from_element(1, 1.0),
                tau2: vec![1.0],
                chi2: vec![1.0; km],
                zeta: vec![0],
                delta: vec![0; km],
                nu: vec![1.0],
                rho: vec![1.0; km],
                phi: DMatrix::zeros(1, km),
            }],
            eta: DMatrix::zeros(1, 1),
            response: None,
        }
    }

    #[test]
    fn scalar_moments() {
        let s = one_view_state(1.0, None);
        let fm = conditional_factor_moments(&s, &[DVector::from_element(1, 2.0)]).unwrap();
        assert!((fm.mean[0] - 1.0).abs() < 1e-14);
        assert!((fm.covariance[(0, 0)] - 0.5).abs() < 1e-14);
        let s = one_view_state(0.0, None);
        let fm = conditional_factor_moments(&s, &[DVector::from_element(1, 2.0)]).unwrap();
        assert_eq!(fm.mean[0], 0.0);
        assert_eq!(fm.covariance[(0, 0)], 1.0);
        assert!(conditional_factor_moments(&s, &[DVector::from_element(1, f64::NAN)]).is_err());
    }

    #[test]
    fn covariance_examples() {
        let s = one_view_state(1.0, Some(1.0));
        assert_eq!(induced_covariance(&s)[0][0][(0, 0)], 3.0);
        let l = [DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 2.0)];
        let g = [DMatrix::zeros(1, 0), DMatrix::zeros(1, 0)];
        let s2 = [DVector::from_element(1, 1.0), DVector::from_element(1, 1.0)];
        assert_eq!(induced_covariance_blocks(&l, &g, &s2)[0][1][(0, 0)], 2.0);
    }

    #[test]
    fn mixture_quantile_of_single_normal() {
        let q = mixture_quantile(&[1.0], &[2.0], 0.95);
        assert!((q - (1.0 + 2.0 * 1.644_853_626_951_472_2)).abs() < 1e-9);
    }
}
