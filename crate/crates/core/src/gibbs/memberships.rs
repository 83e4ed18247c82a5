use nalgebra::DMatrix;

use super::{log_stick_weights, slab_probability, Sampler};
use crate::config::PriorVariant;
use crate::dist::{draw_categorical_log, logpdf_mvt_iso, logpdf_normal_iso};
use crate::error::Result;
use crate::prelude::*;
use crate::rng::VarKind;
use crate::special::ln_gamma;
use crate::state::ModelState;

/// Slab-minus-spike log density of one loading column, with the slab
/// variance integrated out (Student-t with 2a degrees of freedom, scale b/a).
pub fn slab_log_ratio(column: &[f64], a: f64, b: f64, spike: f64) -> f64 {
    logpdf_mvt_iso(column, 2.0 * a, b / a) - logpdf_normal_iso(column, spike)
}

fn column(m: &DMatrix<f64>, h: usize) -> &[f64] {
    let n = m.nrows();
    &m.as_slice()[h * n..(h + 1) * n]
}

/// Log density of the q-variate isotropic t (df `df`, scale `scale`) at a
/// vector with squared norm `ss`; zero for q = 0.
fn lmvt_ss(ss: f64, q: usize, df: f64, scale: f64) -> f64 {
    if q == 0 {
        return 0.0;
    }
    let q = q as f64;
    ln_gamma(0.5 * (df + q)) - ln_gamma(0.5 * df)
        - 0.5 * q * (df * core::f64::consts::PI * scale).ln()
        - 0.5 * (df + q) * (ss / (df * scale)).ln_1p()
}

/// Prior activation probabilities of the shared columns under the
/// cross-view coupling: `P[ζ_mh > h] · (1 − Π_{m'≠m} P[ζ_m'h ≤ h])`.
pub fn apply_fulld_weights(s: &ModelState) -> Vec<Vec<f64>> {
    let q: Vec<Vec<f64>> = s
        .views
        .iter()
        .map(|v| (0..v.k()).map(|h| slab_probability(&v.nu, h)).collect())
        .collect();
    (0..s.n_views())
        .map(|m| {
            (0..s.k())
                .map(|h| {
                    let none_else: f64 = (0..s.n_views()).filter(|&o| o != m).map(|o| 1.0 - q[o][h]).product();
                    q[m][h] * (1.0 - none_else)
                })
                .collect()
        })
        .collect()
}

impl Sampler {
    pub fn update_memberships(&self, s: &mut ModelState, t: usize) -> Result<()> {
        let hp = &self.config.hyper;
        let n_views = s.n_views();
        let k = s.k();
        let delta: Vec<Vec<f64>> = s
            .views
            .iter()
            .map(|v| (0..k).map(|h| slab_log_ratio(column(&v.lambda, h), hp.a_l, hp.b_l, hp.tau2_inf)).collect())
            .collect();
        if self.variant() == PriorVariant::FullD {
            for h in 0..k {
                for m in 0..n_views {
                    let mut ll = [0.0; 2];
                    for (slot, own) in [false, true].into_iter().enumerate() {
                        let active: Vec<bool> = (0..n_views)
                            .map(|o| if o == m { own } else { s.views[o].shared_active(h) })
                            .collect();
                        for o in 0..n_views {
                            let coupled = active[o] && (0..n_views).any(|q| q != o && active[q]);
                            if coupled {
                                ll[slot] += self.temper[o] * delta[o][h];
                            }
                        }
                    }
                    let v = &s.views[m];
                    let mut logp = log_stick_weights(&v.nu);
                    for (l, lp) in logp.iter_mut().enumerate() {
                        *lp += ll[usize::from(l > h)];
                    }
                    let mut rng = self.stream(VarKind::SharedMembership, m, h, t);
                    s.views[m].zeta[h] = draw_categorical_log(&mut rng, &logp)?;
                }
            }
        } else {
            for (m, v) in s.views.iter_mut().enumerate() {
                let logw = log_stick_weights(&v.nu);
                for h in 0..k {
                    let mut logp = logw.clone();
                    let d = self.temper[m] * delta[m][h];
                    for lp in &mut logp[h + 1..] {
                        *lp += d;
                    }
                    let mut rng = self.stream(VarKind::SharedMembership, m, h, t);
                    v.zeta[h] = draw_categorical_log(&mut rng, &logp)?;
                }
            }
        }
        for (m, v) in s.views.iter_mut().enumerate() {
            let logw = log_stick_weights(&v.rho);
            for h in 0..v.k_m() {
                let d = self.temper[m] * slab_log_ratio(column(&v.gamma, h), hp.a_l, hp.b_l, hp.tau2_inf);
                let mut logp = logw.clone();
                for lp in &mut logp[h + 1..] {
                    *lp += d;
                }
                let mut rng = self.stream(VarKind::SpecificMembership, m, h, t);
                v.delta[h] = draw_categorical_log(&mut rng, &logp)?;
            }
        }
        self.update_response_activity(s, t)
    }

    /// Sequential draw of each `r_k` with the common slab variance integrated out.
    fn update_response_activity(&self, s: &mut ModelState, t: usize) -> Result<()> {
        let Some(resp) = s.response.as_mut() else {
            return Ok(());
        };
        let hp = &self.config.hyper;
        let (df, scale) = (2.0 * hp.a_theta, hp.b_theta / hp.a_theta);
        let theta = resp.stacked_theta();
        let mut r = resp.stacked_activity();
        let (l1, l0) = (resp.xi.ln(), (1.0 - resp.xi).ln());
        for k in 0..r.len() {
            let (mut ss, mut q) = (0.0, 0);
            for (o, (&act, th)) in r.iter().zip(theta.iter()).enumerate() {
                if act && o != k {
                    ss += th * th;
                    q += 1;
                }
            }
            let tk = theta[k];
            let on = l1 + lmvt_ss(ss + tk * tk, q + 1, df, scale) - lmvt_ss(ss, q, df, scale);
            let off = l0 + logpdf_normal_iso(&[tk], hp.psi2_inf);
            let mut rng = self.stream(VarKind::ResponseActivity, 0, k, t);
            r[k] = draw_categorical_log(&mut rng, &[off, on])? == 1;
        }
        resp.set_stacked_activity(&r);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_column_prefers_spike() {
        let z = vec![0.0; 100];
        assert!(slab_log_ratio(&z, 0.5, 0.1, 0.005) < 0.0);
    }

    #[test]
    fn lmvt_matches_vector_form() {
        let x = [0.3, -1.2, 0.7];
        let ss: f64 = x.iter().map(|v| v * v).sum();
        assert!((lmvt_ss(ss, 3, 1.0, 0.2) - logpdf_mvt_iso(&x, 1.0, 0.2)).abs() < 1e-13);
    }
}
