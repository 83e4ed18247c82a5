//! Gaussian copula margins from scaled empirical CDFs.
//!
//! Each observed value x of feature j maps to `z = Φ⁻¹(F̂_j(x))` with
//! `F̂_j(t) = #{observed x ≤ t} / (n_j + 1)`, which keeps z finite at the
//! column maximum. The inverse is the pseudo-inverse of the ECDF on the
//! observed support.

use serde::{Deserialize, Serialize};

use crate::data::{MultiviewDataset, View};
use crate::error::{Error, Result};
use crate::prelude::*;
use crate::special::{normal_cdf, probit};

/// Empirical margin of one feature: its sorted observed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub support: Vec<f64>,
}

impl Margin {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::data("feature has no observed values"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { support: values })
    }

    pub fn n(&self) -> usize {
        self.support.len()
    }

    /// Scaled ECDF, in `[1/(n+1), n/(n+1)]` after clamping to the support.
    pub fn ecdf(&self, x: f64) -> f64 {
        let lo = self.support[0];
        let hi = self.support[self.n() - 1];
        let x = x.clamp(lo, hi);
        let count = self.support.partition_point(|&s| s <= x);
        count as f64 / (self.n() + 1) as f64
    }

    pub fn to_latent(&self, x: f64) -> f64 {
        probit(self.ecdf(x))
    }

    /// Smallest support value whose ECDF reaches `Φ(z)`.
    pub fn from_latent(&self, z: f64) -> f64 {
        let u = normal_cdf(z);
        let n = self.n();
        // Tolerance absorbs rounding in Φ(Φ⁻¹(k/(n+1))) so support points round-trip exactly.
        let k = (u * (n + 1) as f64 - 1e-6).ceil();
        let k = if k.is_nan() { 1 } else { (k as i64).clamp(1, n as i64) as usize };
        self.support[k - 1]
    }

    fn looks_discrete(&self) -> bool {
        let mut distinct = 1;
        for w in self.support.windows(2) {
            if w[1] != w[0] {
                distinct += 1;
            }
        }
        distinct <= 10 && 2 * distinct < self.n()
    }
}

/// Margins for every feature of every view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalModel {
    pub views: Vec<Vec<Margin>>,
}

impl MarginalModel {
    pub fn fit(data: &MultiviewDataset) -> Result<Self> {
        let mut views = Vec::with_capacity(data.n_views());
        for (m, v) in data.views.iter().enumerate() {
            let mut margins = Vec::with_capacity(v.p());
            for j in 0..v.p() {
                let obs: Vec<f64> = (0..v.n()).filter_map(|i| v.get(i, j)).collect();
                let margin = Margin::new(obs).map_err(|_| {
                    Error::data(format!("feature `{}` of view {} is entirely missing", v.feature_names[j], m + 1))
                })?;
                if margin.looks_discrete() {
                    return Err(Error::data(format!(
                        "feature `{}` of view {} looks discrete; the copula layer handles continuous margins only",
                        v.feature_names[j],
                        m + 1
                    )));
                }
                margins.push(margin);
            }
            views.push(margins);
        }
        Ok(Self { views })
    }

    /// Maps observed entries to the latent normal scale; the mask is kept.
    pub fn apply(&self, data: &MultiviewDataset) -> Result<MultiviewDataset> {
        if data.views.len() != self.views.len()
            || data.views.iter().zip(&self.views).any(|(v, m)| v.p() != m.len())
        {
            return Err(Error::data("dataset dimensions do not match the marginal model"));
        }
        let mut out = data.clone();
        for (v, margins) in out.views.iter_mut().zip(&self.views) {
            map_observed(v, |j, x| margins[j].to_latent(x));
        }
        Ok(out)
    }

    pub fn from_latent(&self, view: usize, feature: usize, z: f64) -> f64 {
        self.views[view][feature].from_latent(z)
    }
}

fn map_observed(v: &mut View, f: impl Fn(usize, f64) -> f64) {
    for j in 0..v.p() {
        for i in 0..v.n() {
            if v.mask[(i, j)] {
                v.values[(i, j)] = f(j, v.values[(i, j)]);
            }
        }
    }
}

/// Fits the margins and transforms the data in one go.
pub fn to_latent(data: &MultiviewDataset) -> Result<(MultiviewDataset, MarginalModel)> {
    let model = MarginalModel::fit(data)?;
    Ok((model.apply(data)?, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn one_col(xs: &[f64]) -> MultiviewDataset {
        let v = View::complete("v", DMatrix::from_column_slice(xs.len(), 1, xs)).unwrap();
        MultiviewDataset::new(vec![v], None, None).unwrap()
    }

    #[test]
    fn three_point_column() {
        let (z, _) = to_latent(&one_col(&[1.0, 2.0, 3.0])).unwrap();
        let expect = [-0.674_489_750_196_081_7, 0.0, 0.674_489_750_196_081_7];
        for (a, b) in z.views[0].values.iter().zip(expect) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn maximum_stays_finite_and_ties_agree() {
        let (z, _) = to_latent(&one_col(&[4.0, 1.0, 4.0, 2.0, 9.0])).unwrap();
        let col: Vec<f64> = z.views[0].values.iter().cloned().collect();
        assert!(col.iter().all(|v| v.is_finite()));
        assert_eq!(col[0], col[2]);
    }

    #[test]
    fn pseudo_inverse() {
        let m = Margin::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.from_latent(0.0), 2.0);
        assert_eq!(m.from_latent(-10.0), 1.0);
        assert_eq!(m.from_latent(10.0), 3.0);
        for x in [1.0, 2.0, 3.0] {
            assert_eq!(m.from_latent(m.to_latent(x)), x);
        }
    }

    #[test]
    fn round_trip_with_ties() {
        let xs = [0.5, 0.5, 0.5, 1.5, 2.0, 2.0, 7.0, -3.0, 0.0, 11.0, 12.0, 13.0];
        let m = Margin::new(xs.to_vec()).unwrap();
        for x in xs {
            assert_eq!(m.from_latent(m.to_latent(x)), x);
        }
    }

    #[test]
    fn rejects_discrete_and_empty() {
        assert!(MarginalModel::fit(&one_col(&[0.0, 1.0, 0.0, 1.0, 1.0, 0.0])).is_err());
        assert!(MarginalModel::fit(&one_col(&[f64::NAN, f64::NAN])).is_err());
    }

    #[test]
    fn test_values_clamp_to_support() {
        let m = Margin::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.to_latent(-100.0), m.to_latent(1.0));
        assert_eq!(m.to_latent(100.0), m.to_latent(3.0));
    }
}
