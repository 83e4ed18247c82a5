use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{AdaptationEvent, Sampler};
use crate::config::ModelConfig;
use crate::data::MultiviewDataset;
use crate::error::Result;
use crate::prelude::*;
use crate::state::ModelState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRecord {
    pub iteration: usize,
    pub k: usize,
    pub k_m: Vec<usize>,
}

/// Thinned draws of one chain plus its rank trajectory.
#[derive(Debug, Clone)]
pub struct ChainArchive {
    pub config: ModelConfig,
    pub seed: u64,
    pub iterations: Vec<usize>,
    pub states: Vec<ModelState>,
    /// One record per iteration.
    pub ranks: Vec<RankRecord>,
    pub events: Vec<AdaptationEvent>,
    /// Filled in by callers that can read a clock.
    pub elapsed_secs: f64,
    /// When set, stored states carry loadings only (factor matrices have no rows).
    pub slim: bool,
}

impl ChainArchive {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Passed to the observer after every sweep.
#[derive(Debug, Clone, Copy)]
pub struct Progress<'a> {
    pub iteration: usize,
    pub total: usize,
    pub state: &'a ModelState,
    pub event: Option<&'a AdaptationEvent>,
}

fn slim_copy(s: &ModelState) -> ModelState {
    let mut out = s.clone();
    out.eta = DMatrix::zeros(0, s.k());
    for v in &mut out.views {
        v.phi = DMatrix::zeros(0, v.k_m());
    }
    out
}

impl Sampler {
    /// Runs `t_mcmc` sweeps from `state`, keeping thinned draws after burn-in.
    pub fn run(&self, mut state: ModelState, observer: &mut dyn FnMut(Progress<'_>)) -> Result<ChainArchive> {
        let mcmc = &self.config.mcmc;
        let mut archive = ChainArchive {
            config: self.config.clone(),
            seed: mcmc.seed,
            iterations: Vec::with_capacity(mcmc.kept_count()),
            states: Vec::with_capacity(mcmc.kept_count()),
            ranks: Vec::with_capacity(mcmc.t_mcmc),
            events: Vec::new(),
            elapsed_secs: 0.0,
            slim: mcmc.slim,
        };
        for t in 1..=mcmc.t_mcmc {
            let event = self.sweep(&mut state, t)?;
            let (k, k_m) = state.ranks();
            archive.ranks.push(RankRecord { iteration: t, k, k_m });
            if mcmc.is_kept(t) {
                archive.iterations.push(t);
                archive.states.push(if mcmc.slim { slim_copy(&state) } else { state.clone() });
            }
            observer(Progress { iteration: t, total: mcmc.t_mcmc, state: &state, event: event.as_ref() });
            if let Some(e) = event {
                archive.events.push(e);
            }
        }
        Ok(archive)
    }
}

/// Fits one chain on data already on the modelling scale.
pub fn run_chain(config: &ModelConfig, data: &MultiviewDataset) -> Result<ChainArchive> {
    run_chain_with(config, data, &mut |_| {})
}

pub fn run_chain_with(
    config: &ModelConfig,
    data: &MultiviewDataset,
    observer: &mut dyn FnMut(Progress<'_>),
) -> Result<ChainArchive> {
    let sampler = Sampler::new(config, data)?;
    let state = sampler.initialize()?;
    sampler.run(state, observer)
}
