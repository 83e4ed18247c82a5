//! End-to-end fitting: move the data onto the modelling scale, then run a chain.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::copula::MarginalModel;
use crate::data::{MultiviewDataset, StandardizationRecord};
use crate::error::Result;
use crate::gibbs::{run_chain_with, ChainArchive, Progress};

/// How observed features reach the latent Gaussian scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    /// Feature and response scaling; under the copula only the response entries are used.
    pub record: StandardizationRecord,
    pub margins: Option<MarginalModel>,
}

impl Preprocessing {
    pub fn fit(data: &MultiviewDataset, copula: bool) -> Result<Self> {
        if copula {
            Ok(Self { record: StandardizationRecord::response_only(data)?, margins: Some(MarginalModel::fit(data)?) })
        } else {
            Ok(Self { record: StandardizationRecord::fit(data)?, margins: None })
        }
    }

    pub fn apply(&self, data: &MultiviewDataset) -> Result<MultiviewDataset> {
        match &self.margins {
            Some(margins) => {
                let mut z = margins.apply(data)?;
                if let Some(y) = &mut z.response {
                    let r = &self.record;
                    y.apply(|v| *v = (*v - r.response_mean) / r.response_sd);
                }
                Ok(z)
            }
            None => self.record.apply(data),
        }
    }

    /// Maps a latent-scale value of feature `(view, feature)` back to the data scale.
    pub fn feature_from_latent(&self, view: usize, feature: usize, z: f64) -> f64 {
        match &self.margins {
            Some(m) => m.from_latent(view, feature, z),
            None => self.record.unscale_feature(view, feature, z),
        }
    }

    /// Back-transforms a matrix of latent predictions for one view.
    pub fn view_from_latent(&self, view: usize, z: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| self.feature_from_latent(view, j, z[(i, j)]))
    }
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub archive: ChainArchive,
    pub preprocessing: Preprocessing,
}

pub fn fit(config: &ModelConfig, data: &MultiviewDataset, copula: bool) -> Result<Fit> {
    fit_with(config, data, copula, &mut |_| {})
}

pub fn fit_with(
    config: &ModelConfig,
    data: &MultiviewDataset,
    copula: bool,
    observer: &mut dyn FnMut(Progress<'_>),
) -> Result<Fit> {
    config.validate_for(data.n_views())?;
    let preprocessing = Preprocessing::fit(data, copula)?;
    let z = preprocessing.apply(data)?;
    let archive = run_chain_with(config, &z, observer)?;
    Ok(Fit { archive, preprocessing })
}
