use super::Sampler;
use crate::dist::{draw_beta, draw_inverse_gamma};
use crate::error::Result;
use crate::prelude::*;
use crate::rng::{RngStream, VarKind};
use crate::state::ModelState;

/// `ν_h ~ Be(1 + #{label = h}, α + #{label > h})` for all but the last stick.
fn draw_sticks(labels: &[usize], alpha: f64, mut stream: impl FnMut(usize) -> RngStream) -> Result<Vec<f64>> {
    let k = labels.len();
    let mut nu = vec![1.0; k];
    for (h, slot) in nu.iter_mut().enumerate().take(k.saturating_sub(1)) {
        let eq = labels.iter().filter(|&&l| l == h).count() as f64;
        let gt = labels.iter().filter(|&&l| l > h).count() as f64;
        *slot = draw_beta(&mut stream(h), 1.0 + eq, alpha + gt)?;
    }
    Ok(nu)
}

impl Sampler {
    pub fn update_sticks(&self, s: &mut ModelState, t: usize) -> Result<()> {
        let hp = &self.config.hyper;
        let n_views = s.n_views();
        for (m, v) in s.views.iter_mut().enumerate() {
            v.nu = draw_sticks(&v.zeta, hp.alpha_lambda(m, n_views), |h| self.stream(VarKind::Sticks, m, h, t))?;
            v.rho = draw_sticks(&v.delta, hp.alpha_gamma(m), |h| self.stream(VarKind::SpecificSticks, m, h, t))?;
        }
        if let Some(resp) = s.response.as_mut() {
            let r = resp.stacked_activity();
            let on = r.iter().filter(|&&a| a).count() as f64;
            let off = r.len() as f64 - on;
            let mut rng = self.stream(VarKind::ResponseWeight, 0, 0, t);
            resp.xi = draw_beta(&mut rng, hp.a_xi + on, hp.b_xi + off)?;
        }
        Ok(())
    }

    pub fn update_hypervariances(&self, s: &mut ModelState, t: usize) -> Result<()> {
        let hp = &self.config.hyper;
        let variant = self.variant();
        let slab: Vec<Vec<bool>> =
            (0..s.n_views()).map(|m| (0..s.k()).map(|h| s.shared_slab(variant, m, h)).collect()).collect();
        for (m, v) in s.views.iter_mut().enumerate() {
            let p = v.p() as f64;
            for h in 0..v.k() {
                v.tau2[h] = if slab[m][h] {
                    let ss = v.lambda.column(h).norm_squared();
                    let mut rng = self.stream(VarKind::HyperVariances, m, h, t);
                    draw_inverse_gamma(&mut rng, hp.a_l + 0.5 * p, hp.b_l + 0.5 * ss)?
                } else {
                    hp.tau2_inf
                };
            }
            for h in 0..v.k_m() {
                v.chi2[h] = if v.specific_active(h) {
                    let ss = v.gamma.column(h).norm_squared();
                    let mut rng = self.stream(VarKind::SpecificHyperVariances, m, h, t);
                    draw_inverse_gamma(&mut rng, hp.a_l + 0.5 * p, hp.b_l + 0.5 * ss)?
                } else {
                    hp.tau2_inf
                };
            }
        }
        if let Some(resp) = s.response.as_mut() {
            let (mut ss, mut q) = (0.0, 0usize);
            for (th, r) in resp.stacked_theta().iter().zip(resp.stacked_activity()) {
                if r {
                    ss += th * th;
                    q += 1;
                }
            }
            let mut rng = self.stream(VarKind::ResponseWeight, 0, 1, t);
            resp.psi2_o = draw_inverse_gamma(&mut rng, hp.a_theta + 0.5 * q as f64, hp.b_theta + 0.5 * ss)?;
        }
        Ok(())
    }
}
