//! Model configuration, defaults and validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// One set of factors shared by every view.
    Jfr,
    /// Shared factors plus view-specific factors.
    Jafar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorVariant {
    /// Independent cumulative shrinkage per view (JFR).
    ICusp,
    /// Dependent shrinkage: shared columns must be active in two views.
    DCusp,
    /// Independent shrinkage on the shared loadings, no separation rule.
    Naive,
    /// Activation in one view coupled to activation in the others.
    FullD,
}

/// How the stick-breaking concentrations are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// Values are used as concentrations directly.
    #[default]
    Raw,
    /// Values are the expected number of factors; shared concentrations are
    /// divided by the square root of the number of views.
    ExpectedRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_sigma_y: f64,
    pub b_sigma_y: f64,
    pub upsilon2: f64,
    pub upsilon2_y: f64,
    pub a_l: f64,
    pub b_l: f64,
    pub tau2_inf: f64,
    pub a_theta: f64,
    pub b_theta: f64,
    pub psi2_inf: f64,
    pub a_xi: f64,
    pub b_xi: f64,
    /// Shared-loading concentrations; one value per view or a single value
    /// broadcast to all views. Used for the single loading set under JFR.
    pub alpha_lambda: Vec<f64>,
    /// Specific-loading concentrations (JAFAR only).
    pub alpha_gamma: Vec<f64>,
    pub alpha_mode: AlphaMode,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            a_sigma: 3.0,
            b_sigma: 1.0,
            a_sigma_y: 3.0,
            b_sigma_y: 1.0,
            upsilon2: 0.25,
            upsilon2_y: 0.25,
            a_l: 0.5,
            b_l: 0.1,
            tau2_inf: 0.005,
            a_theta: 0.5,
            b_theta: 0.1,
            psi2_inf: 0.005,
            a_xi: 3.0,
            b_xi: 2.0,
            alpha_lambda: vec![5.0],
            alpha_gamma: vec![5.0],
            alpha_mode: AlphaMode::Raw,
        }
    }
}

fn pick(values: &[f64], m: usize) -> f64 {
    if values.len() == 1 {
        values[0]
    } else {
        values[m]
    }
}

impl HyperParams {
    /// Effective shared concentration for view `m` of `n_views`.
    pub fn alpha_lambda(&self, m: usize, n_views: usize) -> f64 {
        let a = pick(&self.alpha_lambda, m);
        match self.alpha_mode {
            AlphaMode::Raw => a,
            AlphaMode::ExpectedRank => a / (n_views as f64).sqrt(),
        }
    }

    pub fn alpha_gamma(&self, m: usize) -> f64 {
        pick(&self.alpha_gamma, m)
    }

    fn validate(&self, n_views: Option<usize>) -> Result<()> {
        let named = [
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("a_sigma_y", self.a_sigma_y),
            ("b_sigma_y", self.b_sigma_y),
            ("upsilon2", self.upsilon2),
            ("upsilon2_y", self.upsilon2_y),
            ("a_l", self.a_l),
            ("b_l", self.b_l),
            ("tau2_inf", self.tau2_inf),
            ("a_theta", self.a_theta),
            ("b_theta", self.b_theta),
            ("psi2_inf", self.psi2_inf),
            ("a_xi", self.a_xi),
            ("b_xi", self.b_xi),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite (got {v})")));
            }
        }
        for (name, vals) in [("alpha_lambda", &self.alpha_lambda), ("alpha_gamma", &self.alpha_gamma)] {
            if vals.is_empty() {
                return Err(Error::Config(format!("{name} needs at least one value")));
            }
            if let Some(v) = vals.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(Error::Config(format!("{name} values must be positive (got {v})")));
            }
            if let Some(m) = n_views {
                if vals.len() != 1 && vals.len() != m {
                    return Err(Error::Config(format!("{name} has {} values for {m} views", vals.len())));
                }
            }
        }
        // The slab scale must exceed the spike variance for shrinkage to increase with the column index.
        if self.b_l / self.a_l <= self.tau2_inf {
            return Err(Error::Config(format!(
                "b_l / a_l = {} must exceed tau2_inf = {}",
                self.b_l / self.a_l,
                self.tau2_inf
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankBounds {
    /// Upper bound on the shared rank (the total rank under JFR).
    pub k_max: usize,
    /// Upper bounds on the specific ranks; one per view or one broadcast value.
    /// Must be empty under JFR.
    pub k_m_max: Vec<usize>,
}

impl Default for RankBounds {
    fn default() -> Self {
        Self { k_max: 40, k_m_max: vec![30] }
    }
}

impl RankBounds {
    pub fn specific(&self, m: usize) -> usize {
        match self.k_m_max.len() {
            0 => 0,
            1 => self.k_m_max[0],
            _ => self.k_m_max[m],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSettings {
    pub t_mcmc: usize,
    pub t_burnin: usize,
    pub t_thin: usize,
    pub seed: u64,
    /// Store only loadings-related blocks in the archive (no factor scores).
    pub slim: bool,
    /// Progress report interval in iterations (0 disables).
    pub progress_every: usize,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self { t_mcmc: 10_000, t_burnin: 5_000, t_thin: 10, seed: 1, slim: false, progress_every: 500 }
    }
}

impl McmcSettings {
    /// Iterations (1-based) that are stored in the archive.
    pub fn is_kept(&self, t: usize) -> bool {
        t > self.t_burnin && (t - self.t_burnin).is_multiple_of(self.t_thin)
    }

    pub fn kept_count(&self) -> usize {
        (self.t_mcmc - self.t_burnin) / self.t_thin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationSettings {
    pub enabled: bool,
    pub t_adapt: usize,
    pub d0: f64,
    pub d1: f64,
}

impl Default for AdaptationSettings {
    fn default() -> Self {
        Self { enabled: true, t_adapt: 200, d0: -0.5, d1: -5e-4 }
    }
}

impl AdaptationSettings {
    /// Probability that the adaptation step fires at iteration `t`.
    pub fn probability(&self, t: usize) -> f64 {
        if !self.enabled || t < self.t_adapt {
            0.0
        } else {
            (self.d0 + self.d1 * t as f64).exp().min(1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    pub supervised: bool,
    pub prior_variant: PriorVariant,
    pub hyper: HyperParams,
    pub rank_bounds: RankBounds,
    pub tempering: bool,
    /// Use the partially collapsed factor update when the model is an
    /// unsupervised JAFAR.
    pub collapsed_factors: bool,
    pub mcmc: McmcSettings,
    pub adaptation: AdaptationSettings,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            family: Family::Jafar,
            supervised: true,
            prior_variant: PriorVariant::DCusp,
            hyper: HyperParams::default(),
            rank_bounds: RankBounds::default(),
            tempering: false,
            collapsed_factors: true,
            mcmc: McmcSettings::default(),
            adaptation: AdaptationSettings::default(),
        }
    }
}

impl ModelConfig {
    /// Defaults for JFR under independent shrinkage.
    pub fn jfr() -> Self {
        Self {
            family: Family::Jfr,
            prior_variant: PriorVariant::ICusp,
            rank_bounds: RankBounds { k_max: 60, k_m_max: Vec::new() },
            hyper: HyperParams { alpha_gamma: vec![1.0], ..HyperParams::default() },
            ..Self::default()
        }
    }

    pub fn jafar(variant: PriorVariant) -> Self {
        Self { prior_variant: variant, ..Self::default() }
    }

    /// Checks every invariant that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.validate_inner(None)
    }

    /// Also checks per-view lengths against the number of views.
    pub fn validate_for(&self, n_views: usize) -> Result<()> {
        self.validate_inner(Some(n_views))
    }

    fn validate_inner(&self, n_views: Option<usize>) -> Result<()> {
        let m = &self.mcmc;
        if m.t_mcmc == 0 {
            return Err(Error::Config("t_mcmc must be positive".into()));
        }
        if m.t_burnin >= m.t_mcmc {
            return Err(Error::Config(format!(
                "t_burnin ({}) must be smaller than t_mcmc ({})",
                m.t_burnin, m.t_mcmc
            )));
        }
        if m.t_thin == 0 {
            return Err(Error::Config("t_thin must be at least 1".into()));
        }
        let a = &self.adaptation;
        if a.t_adapt == 0 {
            return Err(Error::Config("t_adapt must be at least 1".into()));
        }
        if !(a.d1 <= 0.0) || !a.d0.is_finite() {
            return Err(Error::Config(format!("d1 must be nonpositive and d0 finite (got d0={}, d1={})", a.d0, a.d1)));
        }
        let r = &self.rank_bounds;
        if r.k_max == 0 {
            return Err(Error::Config("k_max must be at least 1".into()));
        }
        match self.family {
            Family::Jfr => {
                if !r.k_m_max.is_empty() {
                    return Err(Error::Config("JFR has no view-specific ranks; leave k_m_max empty".into()));
                }
                if self.prior_variant != PriorVariant::ICusp {
                    return Err(Error::Config(format!("prior {:?} requires family = jafar", self.prior_variant)));
                }
            }
            Family::Jafar => {
                if r.k_m_max.is_empty() || r.k_m_max.contains(&0) {
                    return Err(Error::Config("JAFAR needs specific rank bounds of at least 1".into()));
                }
                if let Some(nv) = n_views {
                    if r.k_m_max.len() != 1 && r.k_m_max.len() != nv {
                        return Err(Error::Config(format!("k_m_max has {} values for {nv} views", r.k_m_max.len())));
                    }
                }
                if self.prior_variant == PriorVariant::ICusp {
                    return Err(Error::Config("prior icusp requires family = jfr".into()));
                }
            }
        }
        self.hyper.validate(n_views)
    }

    pub fn is_jafar(&self) -> bool {
        self.family == Family::Jafar
    }
}

/// Prior expected number of shared factors active in at least two views,
/// for per-view concentrations `alphas`; the series is truncated at 10⁴ terms.
pub fn expected_shared_rank(alphas: &[f64]) -> f64 {
    let mut total = 0.0;
    for h in 1..=10_000 {
        // q_m = P[column h active in view m] = (α/(1+α))^h
        let q: Vec<f64> = alphas.iter().map(|a| (a / (1.0 + a)).powi(h)).collect();
        let none: f64 = q.iter().map(|qm| 1.0 - qm).product();
        let one: f64 = (0..q.len())
            .map(|m| q[m] * (0..q.len()).filter(|&k| k != m).map(|k| 1.0 - q[k]).product::<f64>())
            .sum();
        let term = 1.0 - none - one;
        total += term;
        if term < 1e-16 && h > 10 {
            break;
        }
    }
    total
}

/// Common concentration whose expected shared rank over `n_views` views is `target`.
pub fn alpha_for_expected_rank(target: f64, n_views: usize) -> Result<f64> {
    if !(target > 0.0) || n_views < 2 {
        return Err(Error::arg("need a positive target and at least two views"));
    }
    let f = |a: f64| expected_shared_rank(&vec![a; n_views]) - target;
    let (mut lo, mut hi) = (1e-6, 1.0);
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::arg("target rank too large"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn section_3_1() -> ModelConfig {
        let mut c = ModelConfig::jafar(PriorVariant::DCusp);
        c.supervised = false;
        c.rank_bounds = RankBounds { k_max: 40, k_m_max: vec![30, 30, 30] };
        c.hyper.alpha_lambda = vec![10.0];
        c.hyper.alpha_gamma = vec![10.0];
        c.mcmc = McmcSettings { t_mcmc: 10_000, t_burnin: 5_000, t_thin: 10, ..Default::default() };
        c
    }

    #[test]
    fn accepts_reference_settings() {
        section_3_1().validate_for(3).unwrap();
        let mut jfr = ModelConfig::jfr();
        jfr.hyper.alpha_lambda = vec![40.0];
        jfr.validate_for(3).unwrap();
    }

    #[test]
    fn defaults_match_recommended_values() {
        let h = HyperParams::default();
        assert_eq!((h.a_sigma, h.b_sigma, h.upsilon2), (3.0, 1.0, 0.25));
        assert_eq!((h.a_l, h.b_l, h.tau2_inf), (0.5, 0.1, 0.005));
        assert_eq!((h.a_theta, h.b_theta, h.a_xi, h.b_xi), (0.5, 0.1, 3.0, 2.0));
        let a = AdaptationSettings::default();
        assert_eq!((a.t_adapt, a.d0, a.d1), (200, -0.5, -5e-4));
    }

    #[test]
    fn rejects_each_violation() {
        let base = section_3_1();
        let mut bad = Vec::new();
        let mut c = base.clone();
        c.mcmc.t_burnin = c.mcmc.t_mcmc;
        bad.push(c);
        let mut c = base.clone();
        c.mcmc.t_thin = 0;
        bad.push(c);
        let mut c = base.clone();
        c.rank_bounds.k_max = 0;
        bad.push(c);
        let mut c = base.clone();
        c.rank_bounds.k_m_max = vec![0];
        bad.push(c);
        let mut c = base.clone();
        c.prior_variant = PriorVariant::ICusp;
        bad.push(c);
        let mut c = ModelConfig::jfr();
        c.prior_variant = PriorVariant::DCusp;
        bad.push(c);
        let mut c = ModelConfig::jfr();
        c.rank_bounds.k_m_max = vec![3];
        bad.push(c);
        let mut c = base.clone();
        c.hyper.b_l = 0.001;
        bad.push(c);
        let mut c = base.clone();
        c.hyper.a_sigma = 0.0;
        bad.push(c);
        let mut c = base.clone();
        c.adaptation.d1 = 1e-3;
        bad.push(c);
        let mut c = base.clone();
        c.adaptation.t_adapt = 0;
        bad.push(c);
        for c in bad {
            assert!(matches!(c.validate_for(3), Err(Error::Config(_))), "{c:?}");
        }
        let mut c = base;
        c.rank_bounds.k_m_max = vec![1, 2];
        assert!(c.validate_for(3).is_err());
    }

    #[test]
    fn thinning_contract() {
        let m = McmcSettings { t_mcmc: 10, t_burnin: 5, t_thin: 2, ..Default::default() };
        let kept: Vec<usize> = (1..=10).filter(|&t| m.is_kept(t)).collect();
        assert_eq!(kept, vec![7, 9]);
        assert_eq!(m.kept_count(), 2);
    }

    #[test]
    fn adaptation_probability_decays() {
        let a = AdaptationSettings::default();
        assert_eq!(a.probability(199), 0.0);
        let mut last = 1.0;
        for t in 200..20_000 {
            let p = a.probability(t);
            assert!(p <= last);
            last = p;
        }
    }

    #[test]
    fn expected_rank_grows_like_sqrt_m() {
        // With a single view the two-view requirement gives zero; check the
        // series against a direct sum for two views.
        let a = 5.0f64;
        let q = a / (1.0 + a);
        let direct: f64 = (1..5000).map(|h| q.powi(h) * q.powi(h)).sum();
        assert!((expected_shared_rank(&[a, a]) - direct).abs() < 1e-9);
        let alpha = alpha_for_expected_rank(6.0, 3).unwrap();
        assert!((expected_shared_rank(&[alpha; 3]) - 6.0).abs() < 1e-8);
    }
}
