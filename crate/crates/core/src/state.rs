//! One complete Gibbs state.
//!
//! Column indices and membership labels are 0-based: column `h` of a
//! loading matrix is active (drawn from the slab) when its label exceeds
//! `h`. Under JFR the specific blocks are empty (zero columns).

use nalgebra::{DMatrix, DVector};

use crate::config::{Family, PriorVariant};
use crate::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewState {
    /// Intercepts (p).
    pub mu: DVector<f64>,
    /// Shared loadings (p × K).
    pub lambda: DMatrix<f64>,
    /// Specific loadings (p × K_m).
    pub gamma: DMatrix<f64>,
    /// Idiosyncratic variances (p).
    pub sigma2: DVector<f64>,
    /// Column variances of `lambda` (K) and `gamma` (K_m).
    pub tau2: Vec<f64>,
    pub chi2: Vec<f64>,
    /// Membership labels for shared (K) and specific (K_m) columns.
    pub zeta: Vec<usize>,
    pub delta: Vec<usize>,
    /// Stick-breaking fractions; the last entry of each is 1.
    pub nu: Vec<f64>,
    pub rho: Vec<f64>,
    /// Specific factors (n × K_m).
    pub phi: DMatrix<f64>,
}

impl ViewState {
    pub fn p(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn k(&self) -> usize {
        self.lambda.ncols()
    }

    pub fn k_m(&self) -> usize {
        self.gamma.ncols()
    }

    #[inline]
    pub fn shared_active(&self, h: usize) -> bool {
        self.zeta[h] > h
    }

    #[inline]
    pub fn specific_active(&self, h: usize) -> bool {
        self.delta[h] > h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseState {
    pub mu: f64,
    /// Coefficients on the shared factors (K) and on each view's specific factors (K_m).
    pub theta: DVector<f64>,
    pub theta_m: Vec<DVector<f64>>,
    pub sigma2: f64,
    pub r: Vec<bool>,
    pub r_m: Vec<Vec<bool>>,
    /// Common slab variance of the active coefficients.
    pub psi2_o: f64,
    /// Prior probability that a coefficient is active.
    pub xi: f64,
}

impl ResponseState {
    /// `[θ, θ_1, …, θ_M]`.
    pub fn stacked_theta(&self) -> DVector<f64> {
        let total = self.theta.len() + self.theta_m.iter().map(|t| t.len()).sum::<usize>();
        let mut out = DVector::zeros(total);
        out.rows_mut(0, self.theta.len()).copy_from(&self.theta);
        let mut off = self.theta.len();
        for t in &self.theta_m {
            out.rows_mut(off, t.len()).copy_from(t);
            off += t.len();
        }
        out
    }

    pub fn stacked_activity(&self) -> Vec<bool> {
        let mut out = self.r.clone();
        for r in &self.r_m {
            out.extend_from_slice(r);
        }
        out
    }

    pub fn set_stacked_theta(&mut self, v: &DVector<f64>) {
        let k = self.theta.len();
        self.theta.copy_from(&v.rows(0, k));
        let mut off = k;
        for t in &mut self.theta_m {
            let len = t.len();
            t.copy_from(&v.rows(off, len));
            off += len;
        }
    }

    pub fn set_stacked_activity(&mut self, r: &[bool]) {
        let k = self.r.len();
        self.r.copy_from_slice(&r[..k]);
        let mut off = k;
        for rm in &mut self.r_m {
            let len = rm.len();
            rm.copy_from_slice(&r[off..off + len]);
            off += len;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub family: Family,
    pub views: Vec<ViewState>,
    /// Shared factors (n × K).
    pub eta: DMatrix<f64>,
    pub response: Option<ResponseState>,
}

impl ModelState {
    pub fn n(&self) -> usize {
        self.eta.nrows()
    }

    pub fn k(&self) -> usize {
        self.eta.ncols()
    }

    pub fn k_m(&self, m: usize) -> usize {
        self.views[m].k_m()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    /// K + Σ K_m.
    pub fn total_rank(&self) -> usize {
        self.k() + self.views.iter().map(ViewState::k_m).sum::<usize>()
    }

    /// Offset of view m's specific block in the stacked factor vector.
    pub fn specific_offset(&self, m: usize) -> usize {
        self.k() + self.views[..m].iter().map(ViewState::k_m).sum::<usize>()
    }

    pub fn ranks(&self) -> (usize, Vec<usize>) {
        (self.k(), self.views.iter().map(ViewState::k_m).collect())
    }

    /// `[η, φ_1, …, φ_M]` (n × K̃).
    pub fn stacked_factors(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(n, self.total_rank());
        out.columns_mut(0, self.k()).copy_from(&self.eta);
        for (m, v) in self.views.iter().enumerate() {
            out.columns_mut(self.specific_offset(m), v.k_m()).copy_from(&v.phi);
        }
        out
    }

    pub fn set_stacked_factors(&mut self, f: &DMatrix<f64>) {
        let k = self.k();
        self.eta.copy_from(&f.columns(0, k));
        let mut off = k;
        for v in &mut self.views {
            let km = v.k_m();
            v.phi.copy_from(&f.columns(off, km));
            off += km;
        }
    }

    /// The zero-padded loadings `[Λ_m, 0, …, Γ_m, …, 0]` (p_m × K̃) that map
    /// the stacked factors onto view m; this is the JFR form of a JAFAR state.
    pub fn stacked_loadings(&self, m: usize) -> DMatrix<f64> {
        let v = &self.views[m];
        let mut out = DMatrix::zeros(v.p(), self.total_rank());
        out.columns_mut(0, self.k()).copy_from(&v.lambda);
        out.columns_mut(self.specific_offset(m), v.k_m()).copy_from(&v.gamma);
        out
    }

    /// Whether shared column h of view m is currently drawn from the slab.
    ///
    /// Under FULL-D a column is active in a view only if its label is active
    /// there and in at least one other view.
    pub fn shared_slab(&self, variant: PriorVariant, m: usize, h: usize) -> bool {
        let own = self.views[m].shared_active(h);
        if variant != PriorVariant::FullD || !own {
            return own;
        }
        self.views.iter().enumerate().any(|(k, v)| k != m && v.shared_active(h))
    }

    /// Number of views in which shared column h is active.
    pub fn shared_activity_count(&self, h: usize) -> usize {
        self.views.iter().filter(|v| v.shared_active(h)).count()
    }

    /// Internal consistency checks; returns a description of the first violation.
    pub fn check(&self, variant: PriorVariant, tau2_inf: f64, psi2_inf: f64) -> core::result::Result<(), String> {
        let (n, k) = (self.n(), self.k());
        for (m, v) in self.views.iter().enumerate() {
            let p = v.p();
            let km = v.k_m();
            let shapes = v.mu.len() == p
                && v.lambda.shape() == (p, k)
                && v.gamma.shape() == (p, km)
                && v.sigma2.len() == p
                && v.tau2.len() == k
                && v.chi2.len() == km
                && v.zeta.len() == k
                && v.delta.len() == km
                && v.nu.len() == k
                && v.rho.len() == km
                && v.phi.shape() == (n, km);
            if !shapes {
                return Err(format!("view {m}: block shapes are inconsistent"));
            }
            if self.family == Family::Jfr && km > 0 {
                return Err(format!("view {m}: JFR state carries specific factors"));
            }
            if v.sigma2.iter().any(|s| !(*s > 0.0)) {
                return Err(format!("view {m}: nonpositive idiosyncratic variance"));
            }
            for h in 0..k {
                let slab = self.shared_slab(variant, m, h);
                if !(v.tau2[h] > 0.0) || (!slab && v.tau2[h] != tau2_inf) {
                    return Err(format!("view {m}: shared variance {h} inconsistent with its label"));
                }
                if v.zeta[h] >= k {
                    return Err(format!("view {m}: label {} out of range", v.zeta[h]));
                }
            }
            for h in 0..km {
                if !(v.chi2[h] > 0.0) || (!v.specific_active(h) && v.chi2[h] != tau2_inf) {
                    return Err(format!("view {m}: specific variance {h} inconsistent with its label"));
                }
                if v.delta[h] >= km {
                    return Err(format!("view {m}: specific label out of range"));
                }
            }
            if k > 0 && v.nu[k - 1] != 1.0 || km > 0 && v.rho[km - 1] != 1.0 {
                return Err(format!("view {m}: last stick is not 1"));
            }
        }
        if let Some(r) = &self.response {
            if r.theta.len() != k || r.r.len() != k || r.theta_m.len() != self.views.len() {
                return Err("response blocks have the wrong size".into());
            }
            for (m, v) in self.views.iter().enumerate() {
                if r.theta_m[m].len() != v.k_m() || r.r_m[m].len() != v.k_m() {
                    return Err(format!("response block of view {m} has the wrong size"));
                }
            }
            if !(r.sigma2 > 0.0 && r.psi2_o > 0.0 && r.xi > 0.0 && r.xi < 1.0) || psi2_inf <= 0.0 {
                return Err("response variances or weight out of range".into());
            }
        }
        Ok(())
    }
}
