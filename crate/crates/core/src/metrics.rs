//! Evaluation quantities: reconstruction errors, predictive accuracy,
//! active-factor counts and effective sample sizes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::ChainArchive;
use crate::prelude::*;
use crate::state::ModelState;

/// Scales `c[i, j]` by `1 / sqrt(d_row[i] d_col[j])`.
pub fn covariance_to_correlation(c: &DMatrix<f64>, d_row: &DVector<f64>, d_col: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)] / (d_row[i] * d_col[j]).sqrt())
}

/// Squared Frobenius norm of the difference, divided by the number of entries.
pub fn frobenius_recon_error(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::arg("matrices differ in shape"));
    }
    if estimate.is_empty() {
        return Ok(0.0);
    }
    Ok((estimate - truth).norm_squared() / estimate.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveCounts {
    /// Active specific columns per view.
    pub specific: Vec<f64>,
    /// Shared columns active in at least one view.
    pub shared_total: f64,
    /// Active shared columns per view.
    pub shared_per_view: Vec<f64>,
    /// Shared columns active in exactly one view.
    pub shared_one_only: f64,
}

pub fn count_active_factors(s: &ModelState) -> ActiveCounts {
    let n_views = s.n_views();
    let mut c = ActiveCounts {
        specific: s
            .views
            .iter()
            .map(|v| (0..v.k_m()).filter(|&h| v.specific_active(h)).count() as f64)
            .collect(),
        shared_total: 0.0,
        shared_per_view: vec![0.0; n_views],
        shared_one_only: 0.0,
    };
    for h in 0..s.k() {
        let mut count = 0;
        for (m, v) in s.views.iter().enumerate() {
            if v.shared_active(h) {
                c.shared_per_view[m] += 1.0;
                count += 1;
            }
        }
        if count >= 1 {
            c.shared_total += 1.0;
        }
        if count == 1 {
            c.shared_one_only += 1.0;
        }
    }
    c
}

/// Posterior means of the counts over the stored draws.
pub fn count_active_archive(archive: &ChainArchive) -> Result<ActiveCounts> {
    let Some(first) = archive.states.first() else {
        return Err(Error::arg("archive holds no states"));
    };
    let n_views = first.n_views();
    let mut acc = ActiveCounts {
        specific: vec![0.0; n_views],
        shared_total: 0.0,
        shared_per_view: vec![0.0; n_views],
        shared_one_only: 0.0,
    };
    for s in &archive.states {
        let c = count_active_factors(s);
        for m in 0..n_views {
            acc.specific[m] += c.specific[m];
            acc.shared_per_view[m] += c.shared_per_view[m];
        }
        acc.shared_total += c.shared_total;
        acc.shared_one_only += c.shared_one_only;
    }
    let t = archive.states.len() as f64;
    acc.specific.iter_mut().chain(acc.shared_per_view.iter_mut()).for_each(|v| *v /= t);
    acc.shared_total /= t;
    acc.shared_one_only /= t;
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveMetrics {
    pub mse: f64,
    pub r2: f64,
    pub coverage: f64,
}

pub fn predictive_metrics(
    mean: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    truth: &DVector<f64>,
) -> Result<PredictiveMetrics> {
    let n = truth.len();
    if n == 0 {
        return Err(Error::arg("no evaluation points"));
    }
    if mean.len() != n || lower.len() != n || upper.len() != n {
        return Err(Error::arg("prediction and truth lengths differ"));
    }
    let mse = (mean - truth).norm_squared() / n as f64;
    let ybar = truth.mean();
    let var = truth.iter().map(|y| (y - ybar) * (y - ybar)).sum::<f64>() / n as f64;
    let covered = (0..n).filter(|&i| lower[i] <= truth[i] && truth[i] <= upper[i]).count();
    Ok(PredictiveMetrics { mse, r2: 1.0 - mse / var, coverage: covered as f64 / n as f64 })
}

/// Effective sample size with Geyer's initial monotone sequence estimator;
/// a constant series counts as fully efficient.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let acov = |lag: usize| d[..n - lag].iter().zip(&d[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let g0 = acov(0);
    if !(g0 > 0.0) {
        return n as f64;
    }
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let mut pair = (acov(2 * k) + acov(2 * k + 1)) / g0;
        if pair <= 0.0 {
            break;
        }
        if pair > prev {
            pair = prev;
        }
        sum += pair;
        prev = pair;
        k += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    n as f64 / tau
}

/// Mean over draws of the within-view induced correlation of view `m`.
pub fn posterior_mean_correlation(archive: &ChainArchive, m: usize) -> Result<DMatrix<f64>> {
    let Some(first) = archive.states.first() else {
        return Err(Error::arg("archive holds no states"));
    };
    let p = first.views[m].p();
    let mut acc = DMatrix::zeros(p, p);
    for s in &archive.states {
        acc += crate::predict::induced_correlation(s, m);
    }
    Ok(acc / archive.states.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{StreamFactory, VarKind};

    #[test]
    fn frobenius_examples() {
        let a = DMatrix::from_element(2, 3, 1.0);
        let b = DMatrix::zeros(2, 3);
        assert_eq!(frobenius_recon_error(&a, &b).unwrap(), 1.0);
        assert_eq!(frobenius_recon_error(&a, &a).unwrap(), 0.0);
        assert!(frobenius_recon_error(&a, &DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn predictive_examples() {
        let y = DVector::from_vec(vec![1.0, 2.0, 4.0]);
        let wide = DVector::from_element(3, f64::INFINITY);
        let perfect = predictive_metrics(&y, &(-&wide), &wide, &y).unwrap();
        assert_eq!((perfect.mse, perfect.r2, perfect.coverage), (0.0, 1.0, 1.0));
        let flat = DVector::from_element(3, y.mean());
        assert!(predictive_metrics(&flat, &flat, &flat, &y).unwrap().r2.abs() < 1e-15);
    }

    #[test]
    fn count_memberships() {
        use crate::config::Family;
        use crate::state::ViewState;
        let view = |zeta: Vec<usize>| ViewState {
            mu: DVector::zeros(1),
            lambda: DMatrix::zeros(1, 2),
            gamma: DMatrix::zeros(1, 0),
            sigma2: DVector::from_element(1, 1.0),
            tau2: vec![1.0; 2],
            chi2: Vec::new(),
            zeta,
            delta: Vec::new(),
            nu: vec![0.5, 1.0],
            rho: Vec::new(),
            phi: DMatrix::zeros(1, 0),
        };
        let mut s = ModelState {
            family: Family::Jafar,
            views: vec![view(vec![1, 0]), view(vec![1, 0]), view(vec![0, 0])],
            eta: DMatrix::zeros(1, 2),
            response: None,
        };
        let c = count_active_factors(&s);
        assert_eq!((c.shared_total, c.shared_one_only), (1.0, 0.0));
        assert_eq!(c.shared_per_view, vec![1.0, 1.0, 0.0]);
        s.views[1].zeta[0] = 0;
        assert_eq!(count_active_factors(&s).shared_one_only, 1.0);
    }

    #[test]
    fn ess_iid_ar1_constant() {
        use crate::dist::standard_normal;
        let mut rng = StreamFactory::new(5).stream(VarKind::Test, 0, 0, 0);
        let iid: Vec<f64> = (0..1000).map(|_| standard_normal(&mut rng)).collect();
        let r = effective_sample_size(&iid) / 1000.0;
        assert!((0.8..=1.2).contains(&r), "{r}");
        let mut ar = Vec::with_capacity(20000);
        let mut v = 0.0;
        for _ in 0..20000 {
            v = 0.9 * v + standard_normal(&mut rng);
            ar.push(v);
        }
        let r = effective_sample_size(&ar) / 20000.0;
        let target = 0.1 / 1.9;
        assert!(r > target / 2.0 && r < target * 2.0, "{r}");
        assert_eq!(effective_sample_size(&[3.0; 50]), 50.0);
    }
}
