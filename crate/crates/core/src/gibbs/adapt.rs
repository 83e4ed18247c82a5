use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{log_stick_weights, Sampler};
use crate::config::PriorVariant;
use crate::dist::{draw_beta, draw_categorical_log, draw_normal};
use crate::error::Result;
use crate::prelude::*;
use crate::rng::{RngStream, VarKind};
use crate::state::ModelState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankChange {
    Unchanged,
    /// Old column indices removed; one buffer column was appended after the survivors.
    Dropped(Vec<usize>),
    /// One buffer column appended.
    Grown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptationEvent {
    pub iteration: usize,
    pub shared: RankChange,
    pub specific: Vec<RankChange>,
}

/// Which columns survive, or `None` when the block is left alone. Survivors
/// are always followed by one fresh buffer column.
fn plan(inactive: &[bool], bound: usize) -> (Option<Vec<usize>>, RankChange) {
    let k = inactive.len();
    let n_inactive = inactive.iter().filter(|&&b| b).count();
    if k - n_inactive + 1 < k {
        let dropped: Vec<usize> = (0..k).filter(|&h| inactive[h]).collect();
        let keep = (0..k).filter(|&h| !inactive[h]).collect();
        (Some(keep), RankChange::Dropped(dropped))
    } else if k < bound {
        (Some((0..k).collect()), RankChange::Grown)
    } else {
        (None, RankChange::Unchanged)
    }
}

fn rebuild(a: &DMatrix<f64>, keep: &[usize], mut fresh: impl FnMut(usize) -> f64) -> DMatrix<f64> {
    let rows = a.nrows();
    let mut out = DMatrix::zeros(rows, keep.len() + 1);
    for (c, &h) in keep.iter().enumerate() {
        out.set_column(c, &a.column(h));
    }
    for i in 0..rows {
        out[(i, keep.len())] = fresh(i);
    }
    out
}

fn rebuild_vec<T: Copy>(v: &[T], keep: &[usize], fresh: T) -> Vec<T> {
    keep.iter().map(|&h| v[h]).chain(core::iter::once(fresh)).collect()
}

/// Carries labels over to new positions without changing any column's activity.
fn remap_labels(labels: &[usize], keep: &[usize]) -> Vec<usize> {
    let k_new = keep.len() + 1;
    keep.iter()
        .enumerate()
        .map(|(h_new, &h)| {
            let l = labels[h];
            if l > h {
                l.max(h_new + 1).min(k_new - 1)
            } else {
                l.min(h_new)
            }
        })
        .collect()
}

/// New sticks and labels: survivors keep theirs (the old last stick is
/// redrawn if it is no longer last), the buffer gets a label from the prior.
fn rebuild_sticks(
    rng: &mut RngStream,
    nu: &[f64],
    labels: &[usize],
    keep: &[usize],
    alpha: f64,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut new_nu = Vec::with_capacity(keep.len() + 1);
    for &h in keep {
        new_nu.push(if h + 1 == nu.len() { draw_beta(rng, 1.0, alpha)? } else { nu[h] });
    }
    new_nu.push(1.0);
    let mut new_labels = remap_labels(labels, keep);
    new_labels.push(draw_categorical_log(rng, &log_stick_weights(&new_nu))?);
    Ok((new_nu, new_labels))
}

impl Sampler {
    /// Shared columns counted as inactive by the adaptation rule of the prior variant.
    pub fn inactive_shared(&self, s: &ModelState) -> Vec<bool> {
        let two_views = matches!(self.variant(), PriorVariant::DCusp | PriorVariant::FullD);
        (0..s.k())
            .map(|h| {
                let c = s.shared_activity_count(h);
                if two_views {
                    c <= 1
                } else {
                    c == 0
                }
            })
            .collect()
    }

    pub fn adapt_ranks(&self, s: &mut ModelState, t: usize) -> Result<Option<AdaptationEvent>> {
        let settings = &self.config.adaptation;
        if !settings.enabled || t < settings.t_adapt {
            return Ok(None);
        }
        let u: f64 = self.stream(VarKind::Adaptation, 0, 0, t).random();
        if u >= settings.probability(t) {
            return Ok(None);
        }
        let hp = &self.config.hyper;
        let n_views = s.n_views();
        let n = s.n();

        let (keep, shared) = plan(&self.inactive_shared(s), self.config.rank_bounds.k_max);
        if let Some(keep) = keep {
            for m in 0..n_views {
                let mut rng = self.stream(VarKind::Buffer, m, 0, t);
                let v = &mut s.views[m];
                v.lambda = rebuild(&v.lambda, &keep, |_| draw_normal(&mut rng, 0.0, hp.tau2_inf));
                v.tau2 = rebuild_vec(&v.tau2, &keep, hp.tau2_inf);
                let (nu, zeta) = rebuild_sticks(&mut rng, &v.nu, &v.zeta, &keep, hp.alpha_lambda(m, n_views))?;
                v.nu = nu;
                v.zeta = zeta;
            }
            let mut rng = self.stream(VarKind::Buffer, n_views, 0, t);
            s.eta = rebuild(&s.eta, &keep, |_| draw_normal(&mut rng, 0.0, 1.0));
            if let Some(r) = s.response.as_mut() {
                let fresh = draw_normal(&mut rng, 0.0, hp.psi2_inf);
                r.theta = DVector::from_vec(rebuild_vec(r.theta.as_slice(), &keep, fresh));
                r.r = rebuild_vec(&r.r, &keep, false);
            }
        }

        let mut specific = Vec::with_capacity(n_views);
        for m in 0..n_views {
            if s.views[m].k_m() == 0 {
                specific.push(RankChange::Unchanged);
                continue;
            }
            let inactive: Vec<bool> = (0..s.k_m(m)).map(|h| !s.views[m].specific_active(h)).collect();
            let (keep, change) = plan(&inactive, self.config.rank_bounds.specific(m));
            specific.push(change);
            let Some(keep) = keep else { continue };
            let mut rng = self.stream(VarKind::Buffer, m, 1, t);
            let v = &mut s.views[m];
            v.gamma = rebuild(&v.gamma, &keep, |_| draw_normal(&mut rng, 0.0, hp.tau2_inf));
            v.chi2 = rebuild_vec(&v.chi2, &keep, hp.tau2_inf);
            let (rho, delta) = rebuild_sticks(&mut rng, &v.rho, &v.delta, &keep, hp.alpha_gamma(m))?;
            v.rho = rho;
            v.delta = delta;
            v.phi = rebuild(&v.phi, &keep, |_| draw_normal(&mut rng, 0.0, 1.0));
            debug_assert_eq!(v.phi.nrows(), n);
            if let Some(r) = s.response.as_mut() {
                let fresh = draw_normal(&mut rng, 0.0, hp.psi2_inf);
                r.theta_m[m] = DVector::from_vec(rebuild_vec(r.theta_m[m].as_slice(), &keep, fresh));
                r.r_m[m] = rebuild_vec(&r.r_m[m], &keep, false);
            }
        }
        if shared == RankChange::Unchanged && specific.iter().all(|c| *c == RankChange::Unchanged) {
            return Ok(None);
        }
        Ok(Some(AdaptationEvent { iteration: t, shared, specific }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_traced_plan() {
        // activity counts (3, 1, 0) under the two-view rule
        let (keep, change) = plan(&[false, true, true], 40);
        assert_eq!(keep, Some(vec![0]));
        assert_eq!(change, RankChange::Dropped(vec![1, 2]));
        let (keep, change) = plan(&[false, false, true], 40);
        assert_eq!(keep, Some(vec![0, 1, 2]));
        assert_eq!(change, RankChange::Grown);
        assert_eq!(plan(&[false, false, true], 3).1, RankChange::Unchanged);
    }

    #[test]
    fn remap_preserves_activity() {
        let labels = [3, 0, 4, 1, 2];
        let keep = [0, 2, 3];
        let new = remap_labels(&labels, &keep);
        for (h_new, &h) in keep.iter().enumerate() {
            assert_eq!(new[h_new] > h_new, labels[h] > h);
            assert!(new[h_new] < keep.len() + 1);
        }
    }
}
