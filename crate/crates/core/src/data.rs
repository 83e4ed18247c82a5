//! Multiview datasets and standardization.
//!
//! Missing entries are tracked by a mask (`true` = observed). The value slot
//! of a missing entry holds `NaN` so an accidental read is loud, but no code
//! path reads it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prelude::*;

/// One block of features measured on the shared subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub name: String,
    /// n × p values; entries with `mask == false` are `NaN`.
    pub values: DMatrix<f64>,
    pub mask: DMatrix<bool>,
    pub feature_names: Vec<String>,
}

impl View {
    /// Builds a view from values where `NaN` marks a missing entry.
    pub fn from_values(name: impl Into<String>, values: DMatrix<f64>, feature_names: Vec<String>) -> Result<Self> {
        let mask = values.map(|v| !v.is_nan());
        Self::with_mask(name, values, mask, feature_names)
    }

    pub fn with_mask(
        name: impl Into<String>,
        mut values: DMatrix<f64>,
        mask: DMatrix<bool>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let name = name.into();
        if mask.shape() != values.shape() {
            return Err(Error::data(format!("view `{name}`: mask shape differs from value shape")));
        }
        if values.ncols() == 0 {
            return Err(Error::data(format!("view `{name}` has no features")));
        }
        if feature_names.len() != values.ncols() {
            return Err(Error::data(format!(
                "view `{name}`: {} feature names for {} columns",
                feature_names.len(),
                values.ncols()
            )));
        }
        for (v, &m) in values.iter_mut().zip(mask.iter()) {
            if !m {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(Error::data(format!("view `{name}` contains a non-finite observed value")));
            }
        }
        Ok(Self { name, values, mask, feature_names })
    }

    /// Unnamed complete view, features named `f1..fp`.
    pub fn complete(name: impl Into<String>, values: DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|j| format!("f{j}")).collect();
        Self::from_values(name, values, names)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if self.mask[(i, j)] {
            Some(self.values[(i, j)])
        } else {
            None
        }
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn observed_in_column(&self, j: usize) -> usize {
        self.mask.column(j).iter().filter(|&&m| m).count()
    }

    /// Number of subjects with at least one observed entry.
    pub fn subjects_observed(&self) -> usize {
        (0..self.n()).filter(|&i| self.mask.row(i).iter().any(|&m| m)).count()
    }

    /// Values with missing entries replaced by zero, for dense products.
    pub fn zero_filled(&self) -> DMatrix<f64> {
        self.values.zip_map(&self.mask, |v, m| if m { v } else { 0.0 })
    }
}

/// M views on shared subjects and an optional response (`NaN` = missing).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiviewDataset {
    pub views: Vec<View>,
    pub response: Option<DVector<f64>>,
    pub subject_ids: Vec<String>,
}

impl MultiviewDataset {
    pub fn new(views: Vec<View>, response: Option<DVector<f64>>, subject_ids: Option<Vec<String>>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::data("a dataset needs at least one view"));
        }
        let n = views[0].n();
        for v in &views {
            if v.n() != n {
                return Err(Error::data(format!(
                    "view `{}` has {} rows but view `{}` has {n}",
                    v.name,
                    v.n(),
                    views[0].name
                )));
            }
        }
        if let Some(y) = &response {
            if y.len() != n {
                return Err(Error::data(format!("response has {} entries for {n} subjects", y.len())));
            }
            if y.iter().any(|v| v.is_infinite()) {
                return Err(Error::data("response contains an infinite value"));
            }
        }
        let subject_ids = match subject_ids {
            Some(ids) if ids.len() != n => {
                return Err(Error::data(format!("{} subject ids for {n} subjects", ids.len())))
            }
            Some(ids) => ids,
            None => (1..=n).map(|i| format!("s{i}")).collect(),
        };
        Ok(Self { views, response, subject_ids })
    }

    pub fn n(&self) -> usize {
        self.views[0].n()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(View::p).collect()
    }

    pub fn response_complete(&self) -> bool {
        self.response.as_ref().is_some_and(|y| y.iter().all(|v| v.is_finite()))
    }

    /// Same features in the same order as `other`.
    pub fn same_schema(&self, other: &MultiviewDataset) -> bool {
        self.views.len() == other.views.len()
            && self.views.iter().zip(&other.views).all(|(a, b)| a.feature_names == b.feature_names)
    }

    pub fn check_schema(&self, training: &MultiviewDataset) -> Result<()> {
        if self.views.len() != training.views.len() {
            return Err(Error::data(format!(
                "expected {} views, got {}",
                training.views.len(),
                self.views.len()
            )));
        }
        for (m, (a, b)) in self.views.iter().zip(&training.views).enumerate() {
            if a.feature_names != b.feature_names {
                return Err(Error::data(format!("feature names of view {} differ from the training data", m + 1)));
            }
        }
        Ok(())
    }

    /// Subset of subjects, in the given order.
    pub fn select_subjects(&self, rows: &[usize]) -> Self {
        let views = self
            .views
            .iter()
            .map(|v| View {
                name: v.name.clone(),
                values: DMatrix::from_fn(rows.len(), v.p(), |i, j| v.values[(rows[i], j)]),
                mask: DMatrix::from_fn(rows.len(), v.p(), |i, j| v.mask[(rows[i], j)]),
                feature_names: v.feature_names.clone(),
            })
            .collect();
        Self {
            views,
            response: self.response.as_ref().map(|y| DVector::from_fn(rows.len(), |i, _| y[rows[i]])),
            subject_ids: rows.iter().map(|&i| self.subject_ids[i].clone()).collect(),
        }
    }
}

/// Per-feature centring and scaling, stored so it can be inverted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub view_means: Vec<Vec<f64>>,
    pub view_sds: Vec<Vec<f64>>,
    pub response_mean: f64,
    pub response_sd: f64,
}

fn mean_sd(values: impl Iterator<Item = f64>) -> Option<(f64, f64, usize)> {
    let xs: Vec<f64> = values.collect();
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    Some((mean, (ss / (n - 1) as f64).sqrt(), n))
}

impl StandardizationRecord {
    /// Estimates means and sample standard deviations (n − 1 denominator)
    /// over observed entries.
    pub fn fit(data: &MultiviewDataset) -> Result<Self> {
        let mut rec = Self::identity(data);
        for (m, v) in data.views.iter().enumerate() {
            for j in 0..v.p() {
                let col = (0..v.n()).filter_map(|i| v.get(i, j));
                match mean_sd(col) {
                    Some((mean, sd, _)) if sd > 0.0 && sd.is_finite() => {
                        rec.view_means[m][j] = mean;
                        rec.view_sds[m][j] = sd;
                    }
                    _ => {
                        return Err(Error::ConstantFeature {
                            view: m + 1,
                            feature: v.feature_names[j].clone(),
                        })
                    }
                }
            }
        }
        rec.fit_response(data)?;
        Ok(rec)
    }

    /// Record that leaves the views untouched and scales only the response.
    pub fn response_only(data: &MultiviewDataset) -> Result<Self> {
        let mut rec = Self::identity(data);
        rec.fit_response(data)?;
        Ok(rec)
    }

    pub fn identity(data: &MultiviewDataset) -> Self {
        Self {
            view_means: data.views.iter().map(|v| vec![0.0; v.p()]).collect(),
            view_sds: data.views.iter().map(|v| vec![1.0; v.p()]).collect(),
            response_mean: 0.0,
            response_sd: 1.0,
        }
    }

    fn fit_response(&mut self, data: &MultiviewDataset) -> Result<()> {
        if let Some(y) = &data.response {
            if y.iter().all(|v| v.is_nan()) {
                return Ok(());
            }
            match mean_sd(y.iter().cloned().filter(|v| v.is_finite())) {
                Some((mean, sd, _)) if sd > 0.0 => {
                    self.response_mean = mean;
                    self.response_sd = sd;
                }
                _ => return Err(Error::data("response is constant or has fewer than two values")),
            }
        }
        Ok(())
    }

    pub fn apply(&self, data: &MultiviewDataset) -> Result<MultiviewDataset> {
        self.check_dims(data)?;
        let mut out = data.clone();
        for (m, v) in out.views.iter_mut().enumerate() {
            for j in 0..v.p() {
                let (mu, sd) = (self.view_means[m][j], self.view_sds[m][j]);
                for i in 0..v.n() {
                    if v.mask[(i, j)] {
                        v.values[(i, j)] = (v.values[(i, j)] - mu) / sd;
                    }
                }
            }
        }
        if let Some(y) = &mut out.response {
            y.apply(|v| *v = (*v - self.response_mean) / self.response_sd);
        }
        Ok(out)
    }

    pub fn invert(&self, data: &MultiviewDataset) -> Result<MultiviewDataset> {
        self.check_dims(data)?;
        let mut out = data.clone();
        for (m, v) in out.views.iter_mut().enumerate() {
            for j in 0..v.p() {
                for i in 0..v.n() {
                    if v.mask[(i, j)] {
                        v.values[(i, j)] = self.unscale_feature(m, j, v.values[(i, j)]);
                    }
                }
            }
        }
        if let Some(y) = &mut out.response {
            y.apply(|v| *v = self.unscale_response(*v));
        }
        Ok(out)
    }

    #[inline]
    pub fn unscale_feature(&self, view: usize, feature: usize, z: f64) -> f64 {
        self.view_means[view][feature] + self.view_sds[view][feature] * z
    }

    #[inline]
    pub fn unscale_response(&self, z: f64) -> f64 {
        self.response_mean + self.response_sd * z
    }

    fn check_dims(&self, data: &MultiviewDataset) -> Result<()> {
        let ok = data.views.len() == self.view_means.len()
            && data.views.iter().zip(&self.view_means).all(|(v, mu)| v.p() == mu.len());
        if ok {
            Ok(())
        } else {
            Err(Error::data("dataset dimensions do not match the standardization record"))
        }
    }
}

/// Standardizes every feature and the response to mean 0 and sample sd 1.
pub fn standardize(data: &MultiviewDataset) -> Result<(MultiviewDataset, StandardizationRecord)> {
    let rec = StandardizationRecord::fit(data)?;
    Ok((rec.apply(data)?, rec))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> MultiviewDataset {
        let v = View::complete("v", DMatrix::from_column_slice(values.len(), 1, values)).unwrap();
        MultiviewDataset::new(vec![v], None, None).unwrap()
    }

    #[test]
    fn standardize_small_column() {
        let (z, rec) = standardize(&col(&[1.0, 2.0, 3.0])).unwrap();
        let out: Vec<f64> = z.views[0].values.iter().cloned().collect();
        assert_eq!(out, vec![-1.0, 0.0, 1.0]);
        assert_eq!(rec.view_means[0][0], 2.0);
        assert_eq!(rec.view_sds[0][0], 1.0);
    }

    #[test]
    fn standardize_is_idempotent_and_invertible() {
        let d = col(&[0.3, -1.2, 4.5, 2.2, 0.0]);
        let (z, rec) = standardize(&d).unwrap();
        let (z2, _) = standardize(&z).unwrap();
        let diff = (&z.views[0].values - &z2.views[0].values).amax();
        assert!(diff < 1e-12);
        let back = rec.invert(&z).unwrap();
        assert!((&back.views[0].values - &d.views[0].values).amax() < 1e-12);
    }

    #[test]
    fn constant_feature_is_named() {
        let err = standardize(&col(&[5.0, 5.0, 5.0])).unwrap_err();
        match err {
            Error::ConstantFeature { view, feature } => {
                assert_eq!(view, 1);
                assert_eq!(feature, "f1");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn standardize_uses_observed_entries_only() {
        let mut vals = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 100.0]);
        vals[(3, 0)] = f64::NAN;
        let v = View::complete("v", vals).unwrap();
        assert!(!v.mask[(3, 0)]);
        let d = MultiviewDataset::new(vec![v], None, None).unwrap();
        let (z, _) = standardize(&d).unwrap();
        assert_eq!(z.views[0].get(0, 0), Some(-1.0));
        assert_eq!(z.views[0].get(3, 0), None);
    }

    #[test]
    fn views_must_share_subjects() {
        let a = View::complete("a", DMatrix::zeros(3, 2)).unwrap();
        let b = View::complete("b", DMatrix::zeros(4, 2)).unwrap();
        assert!(matches!(MultiviewDataset::new(vec![a, b], None, None), Err(Error::Data(_))));
    }
}
