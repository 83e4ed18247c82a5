//! Adaptive Gibbs samplers for JFR and JAFAR.
//!
//! A [`Sampler`] owns the prepared data and the configuration; every update
//! is a method on it that mutates a [`ModelState`] in place and draws from
//! streams labelled by (kind, view, index, iteration).

mod adapt;
mod chain;
mod factors;
mod init;
mod loadings;
mod memberships;
pub mod prior;
mod sticks;
mod variances;

use alloc::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::config::{Family, ModelConfig, PriorVariant};
use crate::data::MultiviewDataset;
use crate::error::{Error, Result};
use crate::prelude::*;
use crate::rng::{RngStream, StreamFactory, VarKind};

pub use adapt::{AdaptationEvent, RankChange};
pub use memberships::{apply_fulld_weights, slab_log_ratio};
pub use chain::{run_chain, run_chain_with, ChainArchive, Progress, RankRecord};

/// One view of the data in the form the updates consume.
#[derive(Debug, Clone)]
pub struct ObservedView {
    /// Values with missing entries set to zero.
    pub x: DMatrix<f64>,
    pub mask: DMatrix<bool>,
    /// `mask` as 0/1 weights, column-major like `x`.
    pub weights: DMatrix<f64>,
    /// Per feature: `None` when fully observed.
    pub col_missing: Vec<bool>,
    pub n_obs: Vec<usize>,
    /// Subjects with at least one observed entry.
    pub n_subjects: usize,
}

/// Subjects sharing one observation pattern across all views.
#[derive(Debug, Clone)]
pub struct Pattern {
    pub subjects: Vec<usize>,
    /// Per view: observed feature indices.
    pub observed: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct ObservedData {
    pub n: usize,
    pub views: Vec<ObservedView>,
    pub y: Option<DVector<f64>>,
    pub patterns: Vec<Pattern>,
}

impl ObservedData {
    pub fn new(data: &MultiviewDataset, supervised: bool) -> Result<Self> {
        let n = data.n();
        let mut views = Vec::with_capacity(data.n_views());
        for v in &data.views {
            let weights = v.mask.map(|m| if m { 1.0 } else { 0.0 });
            let n_obs: Vec<usize> = (0..v.p()).map(|j| v.observed_in_column(j)).collect();
            views.push(ObservedView {
                x: v.zero_filled(),
                mask: v.mask.clone(),
                weights,
                col_missing: n_obs.iter().map(|&c| c < n).collect(),
                n_obs,
                n_subjects: v.subjects_observed(),
            });
        }
        let y = if supervised {
            if !data.response_complete() {
                return Err(Error::data("supervised fitting needs a complete response"));
            }
            data.response.clone()
        } else {
            None
        };
        let mut groups: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let key: Vec<bool> = data.views.iter().flat_map(|v| v.mask.row(i).iter().cloned().collect::<Vec<_>>()).collect();
            groups.entry(key).or_default().push(i);
        }
        let patterns = groups
            .into_values()
            .map(|subjects| {
                let i = subjects[0];
                let observed = data.views.iter().map(|v| (0..v.p()).filter(|&j| v.mask[(i, j)]).collect()).collect();
                Pattern { subjects, observed }
            })
            .collect();
        Ok(Self { n, views, y, patterns })
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.x.ncols()).collect()
    }
}

/// Runs `f` over `0..n`, in parallel when the `parallel` feature is on.
pub(crate) fn map_indices<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().with_min_len(8).map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Log stick-breaking weights `log ω_ℓ = log ν_ℓ + Σ_{l<ℓ} log(1 − ν_l)`.
pub fn log_stick_weights(nu: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(nu.len());
    let mut acc = 0.0;
    for &v in nu {
        out.push(v.ln() + acc);
        acc += (1.0 - v).ln();
    }
    out
}

/// Prior probability that column h is active: `Σ_{ℓ>h} ω_ℓ`.
pub fn slab_probability(nu: &[f64], h: usize) -> f64 {
    let mut remaining = 1.0;
    for &v in &nu[..=h.min(nu.len() - 1)] {
        remaining *= 1.0 - v;
    }
    remaining
}

/// Gibbs sampler bound to one dataset and configuration.
pub struct Sampler {
    pub config: ModelConfig,
    pub data: ObservedData,
    pub factory: StreamFactory,
    /// Tempering exponent per view (1 when tempering is off).
    pub temper: Vec<f64>,
}

impl Sampler {
    /// Prepares `data` (already on the modelling scale) for sampling.
    pub fn new(config: &ModelConfig, data: &MultiviewDataset) -> Result<Self> {
        config.validate_for(data.n_views())?;
        let prepared = ObservedData::new(data, config.supervised)?;
        if config.family == Family::Jafar && config.prior_variant != PriorVariant::Naive && data.n_views() < 2 {
            return Err(Error::Config("separating shared from specific factors needs at least two views".into()));
        }
        let temper = prepared
            .views
            .iter()
            .map(|v| {
                let p = v.x.ncols();
                if config.tempering {
                    v.n_subjects.min(p) as f64 / p as f64
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { config: config.clone(), data: prepared, factory: StreamFactory::new(config.mcmc.seed), temper })
    }

    pub(crate) fn stream(&self, kind: VarKind, view: usize, index: usize, t: usize) -> RngStream {
        self.factory.stream(kind, view, index, t)
    }

    pub fn variant(&self) -> PriorVariant {
        self.config.prior_variant
    }

    pub fn uses_collapsed_factors(&self) -> bool {
        self.config.family == Family::Jafar && self.data.y.is_none() && self.config.collapsed_factors
    }

    /// One full sweep in the order loadings, variances, factors,
    /// memberships, sticks, hyper-variances, adaptation.
    pub fn sweep(&self, s: &mut ModelState, t: usize) -> Result<Option<AdaptationEvent>> {
        use crate::error::Step;
        self.update_loadings(s, t).map_err(|e| e.at(Step::Loadings, t))?;
        self.update_response_coefficients(s, t).map_err(|e| e.at(Step::ResponseCoefficients, t))?;
        self.update_variances(s, t).map_err(|e| e.at(Step::Variances, t))?;
        self.update_factors(s, t).map_err(|e| e.at(Step::Factors, t))?;
        self.update_memberships(s, t).map_err(|e| e.at(Step::Memberships, t))?;
        self.update_sticks(s, t).map_err(|e| e.at(Step::Sticks, t))?;
        self.update_hypervariances(s, t).map_err(|e| e.at(Step::HyperVariances, t))?;
        self.adapt_ranks(s, t).map_err(|e| e.at(Step::Adaptation, t))
    }
}

pub use crate::state::ModelState;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stick_weights_sum_to_one() {
        let nu = [0.3, 0.5, 0.2, 1.0];
        let w: f64 = log_stick_weights(&nu).iter().map(|l| l.exp()).sum();
        assert!((w - 1.0).abs() < 1e-15);
        assert!((slab_probability(&nu, 0) - 0.7).abs() < 1e-15);
        assert!((slab_probability(&nu, 1) - 0.35).abs() < 1e-15);
        assert_eq!(slab_probability(&nu, 3), 0.0);
    }
}
