//! Forward simulation from the prior and from the likelihood, as used by
//! joint-distribution (Geweke) checks of the sampler.

use nalgebra::{DMatrix, DVector};

use super::variances::{fitted_response, fitted_view};
use super::init::prior_sticks;
use super::Sampler;
use crate::dist::{draw_bernoulli, draw_beta, draw_inverse_gamma, draw_normal};
use crate::error::Result;
use crate::prelude::*;
use crate::rng::{RngStream, VarKind};
use crate::state::{ModelState, ResponseState, ViewState};

fn normal_matrix(rng: &mut RngStream, rows: usize, cols: usize, var: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for c in 0..cols {
        let v = var(c);
        for r in 0..rows {
            m[(r, c)] = draw_normal(rng, 0.0, v);
        }
    }
    m
}

impl Sampler {
    /// One draw of every parameter and latent factor from the prior at fixed ranks.
    pub fn draw_from_prior(&self, k: usize, k_m: &[usize], t: usize) -> Result<ModelState> {
        let hp = &self.config.hyper;
        let n = self.data.n;
        let n_views = self.data.n_views();
        let mut views = Vec::with_capacity(n_views);
        for m in 0..n_views {
            let mut rng = self.stream(VarKind::Prior, m, 0, t);
            let p = self.data.views[m].x.ncols();
            let km = k_m[m];
            let (nu, zeta) = prior_sticks(&mut rng, k, hp.alpha_lambda(m, n_views))?;
            let (rho, delta) = prior_sticks(&mut rng, km, hp.alpha_gamma(m))?;
            let sigma2 = (0..p).map(|_| draw_inverse_gamma(&mut rng, hp.a_sigma, hp.b_sigma)).collect::<Result<Vec<_>>>()?;
            let mu = DVector::from_fn(p, |_, _| draw_normal(&mut rng, 0.0, hp.upsilon2));
            views.push(ViewState {
                mu,
                lambda: DMatrix::zeros(p, k),
                gamma: DMatrix::zeros(p, km),
                sigma2: DVector::from_vec(sigma2),
                tau2: vec![hp.tau2_inf; k],
                chi2: vec![hp.tau2_inf; km],
                zeta,
                delta,
                nu,
                rho,
                phi: DMatrix::zeros(n, km),
            });
        }
        let mut rng = self.stream(VarKind::Prior, n_views, 0, t);
        let eta = normal_matrix(&mut rng, n, k, |_| 1.0);
        let mut state = ModelState { family: self.config.family, views, eta, response: None };
        for m in 0..n_views {
            let mut rng = self.stream(VarKind::Prior, m, 1, t);
            for h in 0..k {
                if state.shared_slab(self.variant(), m, h) {
                    state.views[m].tau2[h] = draw_inverse_gamma(&mut rng, hp.a_l, hp.b_l)?;
                }
            }
            let v = &mut state.views[m];
            for h in 0..v.k_m() {
                if v.specific_active(h) {
                    v.chi2[h] = draw_inverse_gamma(&mut rng, hp.a_l, hp.b_l)?;
                }
            }
            let (p, km) = (v.p(), v.k_m());
            let tau2 = v.tau2.clone();
            let chi2 = v.chi2.clone();
            v.lambda = normal_matrix(&mut rng, p, k, |h| tau2[h]);
            v.gamma = normal_matrix(&mut rng, p, km, |h| chi2[h]);
            v.phi = normal_matrix(&mut rng, n, km, |_| 1.0);
        }
        if self.data.y.is_some() {
            let mut rng = self.stream(VarKind::Prior, n_views + 1, 0, t);
            let xi = draw_beta(&mut rng, hp.a_xi, hp.b_xi)?;
            let psi2_o = draw_inverse_gamma(&mut rng, hp.a_theta, hp.b_theta)?;
            let mut coef = |len: usize| -> Result<(DVector<f64>, Vec<bool>)> {
                let r: Vec<bool> = (0..len).map(|_| draw_bernoulli(&mut rng, xi)).collect::<Result<_>>()?;
                let theta = DVector::from_fn(len, |h, _| {
                    draw_normal(&mut rng, 0.0, if r[h] { psi2_o } else { hp.psi2_inf })
                });
                Ok((theta, r))
            };
            let (theta, r) = coef(k)?;
            let mut theta_m = Vec::with_capacity(n_views);
            let mut r_m = Vec::with_capacity(n_views);
            for &km in k_m {
                let (th, rr) = coef(km)?;
                theta_m.push(th);
                r_m.push(rr);
            }
            let mu = draw_normal(&mut rng, 0.0, hp.upsilon2_y);
            let sigma2 = draw_inverse_gamma(&mut rng, hp.a_sigma_y, hp.b_sigma_y)?;
            state.response = Some(ResponseState { mu, theta, theta_m, sigma2, r, r_m, psi2_o, xi });
        }
        Ok(state)
    }

    /// Draws fresh observations from the likelihood given `s` and installs
    /// them in place of the current ones (the missingness pattern is kept).
    pub fn redraw_observations(&mut self, s: &ModelState, t: usize) {
        let n = self.data.n;
        for m in 0..self.data.n_views() {
            let fit = fitted_view(&s.eta, &s.views[m]);
            let mut rng = self.stream(VarKind::Simulation, m, 0, t);
            let obs = &mut self.data.views[m];
            for j in 0..obs.x.ncols() {
                let sd = s.views[m].sigma2[j].sqrt();
                for i in 0..n {
                    let e = sd * crate::dist::standard_normal(&mut rng);
                    obs.x[(i, j)] = if obs.mask[(i, j)] { fit[(i, j)] + e } else { 0.0 };
                }
            }
        }
        let mut rng = self.stream(VarKind::Simulation, self.data.views.len(), 0, t);
        if let (Some(y), Some(fit)) = (self.data.y.as_mut(), fitted_response(s)) {
            let sd = s.response.as_ref().expect("response present").sigma2.sqrt();
            for i in 0..n {
                y[i] = fit[i] + sd * crate::dist::standard_normal(&mut rng);
            }
        }
    }
}
