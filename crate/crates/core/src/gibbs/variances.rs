use nalgebra::{DMatrix, DVector};

use super::{map_indices, Sampler};
use crate::dist::draw_inverse_gamma;
use crate::error::Result;
use crate::prelude::*;
use crate::rng::VarKind;
use crate::state::{ModelState, ViewState};

/// `1 μᵀ + η Λᵀ + φ Γᵀ` (n × p).
pub(crate) fn fitted_view(eta: &DMatrix<f64>, v: &ViewState) -> DMatrix<f64> {
    let mut fit = eta * v.lambda.transpose();
    if v.k_m() > 0 {
        fit += &v.phi * v.gamma.transpose();
    }
    for (j, mut col) in fit.column_iter_mut().enumerate() {
        col.add_scalar_mut(v.mu[j]);
    }
    fit
}

pub(crate) fn fitted_response(s: &ModelState) -> Option<DVector<f64>> {
    let r = s.response.as_ref()?;
    let mut fit = &s.eta * &r.theta;
    for (v, th) in s.views.iter().zip(&r.theta_m) {
        if !th.is_empty() {
            fit += &v.phi * th;
        }
    }
    fit.add_scalar_mut(r.mu);
    Some(fit)
}

impl Sampler {
    pub fn update_variances(&self, s: &mut ModelState, t: usize) -> Result<()> {
        let hp = &self.config.hyper;
        let n = self.data.n;
        for m in 0..self.data.n_views() {
            let obs = &self.data.views[m];
            let fit = fitted_view(&s.eta, &s.views[m]);
            let draws = map_indices(obs.x.ncols(), |j| {
                let mut ss = 0.0;
                for i in 0..n {
                    if obs.mask[(i, j)] {
                        let r = obs.x[(i, j)] - fit[(i, j)];
                        ss += r * r;
                    }
                }
                let mut rng = self.stream(VarKind::Variances, m, j, t);
                draw_inverse_gamma(&mut rng, hp.a_sigma + 0.5 * obs.n_obs[j] as f64, hp.b_sigma + 0.5 * ss)
            })?;
            s.views[m].sigma2 = DVector::from_vec(draws);
        }
        if let (Some(y), Some(fit)) = (&self.data.y, fitted_response(s)) {
            let ss = (y - fit).norm_squared();
            let mut rng = self.stream(VarKind::ResponseVariance, 0, 0, t);
            let draw = draw_inverse_gamma(&mut rng, hp.a_sigma_y + 0.5 * n as f64, hp.b_sigma_y + 0.5 * ss)?;
            s.response.as_mut().expect("response present").sigma2 = draw;
        }
        Ok(())
    }

    /// Draws every missing entry from its conditional normal; observed
    /// entries are copied through. The draws never enter other updates.
    pub fn impute_missing(&self, s: &ModelState, t: usize) -> Vec<DMatrix<f64>> {
        use crate::dist::draw_normal;
        (0..self.data.n_views())
            .map(|m| {
                let obs = &self.data.views[m];
                let v = &s.views[m];
                let fit = fitted_view(&s.eta, v);
                let mut out = obs.x.clone();
                for j in 0..obs.x.ncols() {
                    if !obs.col_missing[j] {
                        continue;
                    }
                    let mut rng = self.stream(VarKind::Imputation, m, j, t);
                    for i in 0..self.data.n {
                        if !obs.mask[(i, j)] {
                            out[(i, j)] = draw_normal(&mut rng, fit[(i, j)], v.sigma2[j]);
                        }
                    }
                }
                out
            })
            .collect()
    }
}
