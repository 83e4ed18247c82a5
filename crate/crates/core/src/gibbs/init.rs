use nalgebra::{DMatrix, DVector};

use super::{log_stick_weights, Sampler};
use crate::config::Family;
use crate::dist::{draw_bernoulli, draw_beta, draw_categorical_log, draw_normal};
use crate::error::Result;
use crate::prelude::*;
use crate::rng::{RngStream, VarKind};
use crate::state::{ModelState, ResponseState, ViewState};

const INIT_VAR: f64 = 0.01;

fn small_matrix(rng: &mut RngStream, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| draw_normal(rng, 0.0, INIT_VAR))
}

/// Stick fractions from the prior (last one fixed at 1) and labels drawn from them.
pub(crate) fn prior_sticks(rng: &mut RngStream, k: usize, alpha: f64) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut nu = Vec::with_capacity(k);
    for h in 0..k {
        nu.push(if h + 1 == k { 1.0 } else { draw_beta(rng, 1.0, alpha)? });
    }
    let logw = log_stick_weights(&nu);
    let labels = (0..k).map(|_| draw_categorical_log(rng, &logw)).collect::<Result<_>>()?;
    Ok((nu, labels))
}

fn prior_mean_variance(a: f64, b: f64) -> f64 {
    if a > 1.0 {
        b / (a - 1.0)
    } else {
        b / a
    }
}

impl Sampler {
    /// Starting state with every rank at its upper bound.
    pub fn initialize(&self) -> Result<ModelState> {
        let bounds = &self.config.rank_bounds;
        let k_m: Vec<usize> = (0..self.data.n_views())
            .map(|m| if self.config.family == Family::Jafar { bounds.specific(m) } else { 0 })
            .collect();
        self.initialize_with_ranks(bounds.k_max, &k_m)
    }

    pub fn initialize_with_ranks(&self, k: usize, k_m: &[usize]) -> Result<ModelState> {
        let hp = &self.config.hyper;
        let n = self.data.n;
        let n_views = self.data.n_views();
        let slab_init = hp.b_l / hp.a_l;
        let mut views = Vec::with_capacity(n_views);
        for (m, v) in self.data.views.iter().enumerate() {
            let mut rng = self.stream(VarKind::Init, m, 0, 0);
            let p = v.x.ncols();
            let km = k_m[m];
            let mu = DVector::from_fn(p, |j, _| {
                let c = v.n_obs[j];
                if c == 0 {
                    0.0
                } else {
                    v.x.column(j).sum() / c as f64
                }
            });
            let lambda = small_matrix(&mut rng, p, k);
            let gamma = small_matrix(&mut rng, p, km);
            let (nu, zeta) = prior_sticks(&mut rng, k, hp.alpha_lambda(m, n_views))?;
            let (rho, delta) = prior_sticks(&mut rng, km, hp.alpha_gamma(m))?;
            let phi = small_matrix(&mut rng, n, km);
            let tau2 = (0..k).map(|h| if zeta[h] > h { slab_init } else { hp.tau2_inf }).collect();
            let chi2 = (0..km).map(|h| if delta[h] > h { slab_init } else { hp.tau2_inf }).collect();
            views.push(ViewState {
                mu,
                lambda,
                gamma,
                sigma2: DVector::from_element(p, prior_mean_variance(hp.a_sigma, hp.b_sigma)),
                tau2,
                chi2,
                zeta,
                delta,
                nu,
                rho,
                phi,
            });
        }
        let mut rng = self.stream(VarKind::Init, n_views, 0, 0);
        let eta = small_matrix(&mut rng, n, k);
        let response = match &self.data.y {
            None => None,
            Some(y) => {
                let mut rng = self.stream(VarKind::Init, n_views + 1, 0, 0);
                let xi = hp.a_xi / (hp.a_xi + hp.b_xi);
                let mut coef = |len: usize| -> Result<(DVector<f64>, Vec<bool>)> {
                    let theta = DVector::from_fn(len, |_, _| draw_normal(&mut rng, 0.0, INIT_VAR));
                    let r = (0..len).map(|_| draw_bernoulli(&mut rng, xi)).collect::<Result<_>>()?;
                    Ok((theta, r))
                };
                let (theta, r) = coef(k)?;
                let mut theta_m = Vec::with_capacity(n_views);
                let mut r_m = Vec::with_capacity(n_views);
                for &km in k_m {
                    let (t, rr) = coef(km)?;
                    theta_m.push(t);
                    r_m.push(rr);
                }
                Some(ResponseState {
                    mu: y.mean(),
                    theta,
                    theta_m,
                    sigma2: prior_mean_variance(hp.a_sigma_y, hp.b_sigma_y),
                    r,
                    r_m,
                    psi2_o: hp.b_theta / hp.a_theta,
                    xi,
                })
            }
        };
        let mut state = ModelState { family: self.config.family, views, eta, response };
        for m in 0..n_views {
            for h in 0..k {
                if state.shared_slab(self.variant(), m, h) {
                    state.views[m].tau2[h] = slab_init;
                }
            }
        }
        Ok(state)
    }
}
