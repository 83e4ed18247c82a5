use nalgebra::{DMatrix, DVector};

use super::{map_indices, Sampler};
use crate::dist::draw_mvn_factored;
use crate::error::Result;
use crate::linalg::{weighted_cross, weighted_gram, SpdFactor};
use crate::prelude::*;
use crate::rng::VarKind;
use crate::state::ModelState;

/// Scaled residuals `mask ⊙ (x − μ) / σ²` of view m (n × p).
fn scaled_residuals(x: &DMatrix<f64>, mask: &DMatrix<bool>, mu: &DVector<f64>, sigma2: &DVector<f64>) -> DMatrix<f64> {
    let mut r = x.clone();
    for j in 0..r.ncols() {
        let (c, s) = (mu[j], sigma2[j]);
        for i in 0..r.nrows() {
            r[(i, j)] = if mask[(i, j)] { (r[(i, j)] - c) / s } else { 0.0 };
        }
    }
    r
}

fn pattern_weights(observed: &[usize], sigma2: &DVector<f64>) -> Vec<f64> {
    let mut w = vec![0.0; sigma2.len()];
    for &j in observed {
        w[j] = 1.0 / sigma2[j];
    }
    w
}

fn block_index(k: usize, off: usize, km: usize) -> Vec<usize> {
    (0..k).chain(off..off + km).collect()
}

impl Sampler {
    pub fn update_factors(&self, s: &mut ModelState, t: usize) -> Result<()> {
        if self.uses_collapsed_factors() {
            self.update_factors_collapsed(s, t)
        } else {
            self.update_factors_joint(s, t)
        }
    }

    /// Joint draw of the stacked factors `[η_i, φ_1i, …, φ_Mi]` per subject.
    pub fn update_factors_joint(&self, s: &mut ModelState, t: usize) -> Result<()> {
        let n = self.data.n;
        let kt = s.total_rank();
        let k = s.k();
        let blocks: Vec<DMatrix<f64>> = s
            .views
            .iter()
            .map(|v| {
                let mut b = DMatrix::zeros(v.p(), k + v.k_m());
                b.columns_mut(0, k).copy_from(&v.lambda);
                b.columns_mut(k, v.k_m()).copy_from(&v.gamma);
                b
            })
            .collect();
        let idx: Vec<Vec<usize>> = (0..s.n_views()).map(|m| block_index(k, s.specific_offset(m), s.k_m(m))).collect();
        let proj: Vec<DMatrix<f64>> = (0..s.n_views())
            .map(|m| {
                let obs = &self.data.views[m];
                scaled_residuals(&obs.x, &obs.mask, &s.views[m].mu, &s.views[m].sigma2) * &blocks[m]
            })
            .collect();
        let response = match (&self.data.y, &s.response) {
            (Some(y), Some(r)) => Some((y, r.stacked_theta(), r.mu, r.sigma2)),
            _ => None,
        };

        let factors = map_indices(self.data.patterns.len(), |g| {
            let pat = &self.data.patterns[g];
            let mut a = DMatrix::<f64>::identity(kt, kt);
            if let Some((_, th, _, s2)) = &response {
                a += th * th.transpose() / *s2;
            }
            for m in 0..s.n_views() {
                let gram = weighted_gram(&blocks[m], &pattern_weights(&pat.observed[m], &s.views[m].sigma2));
                for (a_col, &c) in idx[m].iter().enumerate() {
                    for (a_row, &r) in idx[m].iter().enumerate() {
                        a[(r, c)] += gram[(a_row, a_col)];
                    }
                }
            }
            SpdFactor::new(&a)
        })?;
        let mut pattern_of = vec![0; n];
        for (g, pat) in self.data.patterns.iter().enumerate() {
            for &i in &pat.subjects {
                pattern_of[i] = g;
            }
        }
        let draws = map_indices(n, |i| {
            let mut u = DVector::zeros(kt);
            for m in 0..s.n_views() {
                for (c, &r) in idx[m].iter().enumerate() {
                    u[r] += proj[m][(i, c)];
                }
            }
            if let Some((y, th, mu, s2)) = &response {
                u.axpy((y[i] - mu) / s2, th, 1.0);
            }
            let mut rng = self.stream(VarKind::SharedFactors, 0, i, t);
            Ok(draw_mvn_factored(&mut rng, &factors[pattern_of[i]], &u))
        })?;
        let mut f = DMatrix::zeros(n, kt);
        for (i, d) in draws.iter().enumerate() {
            f.row_mut(i).copy_from(&d.transpose());
        }
        s.set_stacked_factors(&f);
        Ok(())
    }

    /// Draws `η_i` with the specific factors integrated out, then each `φ_mi | η_i`.
    pub fn update_factors_collapsed(&self, s: &mut ModelState, t: usize) -> Result<()> {
        struct ViewPieces {
            c: SpdFactor,
            g: DMatrix<f64>,
        }
        let n = self.data.n;
        let k = s.k();
        let n_views = s.n_views();
        let proj: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..n_views)
            .map(|m| {
                let obs = &self.data.views[m];
                let v = &s.views[m];
                let r = scaled_residuals(&obs.x, &obs.mask, &v.mu, &v.sigma2);
                (&r * &v.lambda, &r * &v.gamma)
            })
            .collect();

        let per_pattern = map_indices(self.data.patterns.len(), |g| {
            let pat = &self.data.patterns[g];
            let mut a = DMatrix::<f64>::identity(k, k);
            let mut pieces = Vec::with_capacity(n_views);
            for m in 0..n_views {
                let v = &s.views[m];
                let w = pattern_weights(&pat.observed[m], &v.sigma2);
                let mut c = weighted_gram(&v.gamma, &w);
                for h in 0..v.k_m() {
                    c[(h, h)] += 1.0;
                }
                let c = SpdFactor::new(&c)?;
                let gm = weighted_cross(&v.gamma, &w, &v.lambda);
                let cg = c.solve_matrix(&gm);
                a += weighted_gram(&v.lambda, &w) - gm.tr_mul(&cg);
                pieces.push(ViewPieces { c, g: gm });
            }
            Ok((SpdFactor::new(&a)?, pieces))
        })?;
        let mut pattern_of = vec![0; n];
        for (g, pat) in self.data.patterns.iter().enumerate() {
            for &i in &pat.subjects {
                pattern_of[i] = g;
            }
        }
        let draws = map_indices(n, |i| {
            let (vf, pieces) = &per_pattern[pattern_of[i]];
            let mut u = DVector::zeros(k);
            let mut gs = Vec::with_capacity(n_views);
            for m in 0..n_views {
                let a_m = proj[m].0.row(i).transpose();
                let g_m = proj[m].1.row(i).transpose();
                let cg = pieces[m].c.solve(&g_m);
                u += a_m - pieces[m].g.tr_mul(&cg);
                gs.push(g_m);
            }
            let mut rng = self.stream(VarKind::SharedFactors, 0, i, t);
            let eta = draw_mvn_factored(&mut rng, vf, &u);
            let phis: Vec<DVector<f64>> = (0..n_views)
                .map(|m| {
                    let b = &gs[m] - &pieces[m].g * &eta;
                    let mut rng = self.stream(VarKind::SpecificFactors, m, i, t);
                    draw_mvn_factored(&mut rng, &pieces[m].c, &b)
                })
                .collect();
            Ok((eta, phis))
        })?;
        for (i, (eta, phis)) in draws.into_iter().enumerate() {
            s.eta.row_mut(i).copy_from(&eta.transpose());
            for (m, phi) in phis.into_iter().enumerate() {
                s.views[m].phi.row_mut(i).copy_from(&phi.transpose());
            }
        }
        Ok(())
    }
}
