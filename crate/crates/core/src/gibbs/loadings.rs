use nalgebra::{DMatrix, DVector};

use super::{map_indices, Sampler};
use crate::dist::draw_mvn_factored;
use crate::error::Result;
use crate::linalg::{weighted_gram, SpdFactor};
use crate::prelude::*;
use crate::rng::VarKind;
use crate::state::ModelState;

/// `[1, blocks…]` column-wise.
pub(crate) fn design(n: usize, blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let d = 1 + blocks.iter().map(|b| b.ncols()).sum::<usize>();
    let mut w = DMatrix::zeros(n, d);
    w.column_mut(0).fill(1.0);
    let mut off = 1;
    for b in blocks {
        w.columns_mut(off, b.ncols()).copy_from(b);
        off += b.ncols();
    }
    w
}

/// Draws one regression row: precision `diag(prior) + gram/σ²`, linear term `wx/σ²`.
pub(crate) fn draw_row(
    rng: &mut crate::rng::RngStream,
    gram: &DMatrix<f64>,
    wx: DVector<f64>,
    prior_precision: &[f64],
    sigma2: f64,
) -> Result<DVector<f64>> {
    let mut prec = gram / sigma2;
    for (i, p) in prior_precision.iter().enumerate() {
        prec[(i, i)] += p;
    }
    let factor = SpdFactor::with_jitter(&prec)?;
    Ok(draw_mvn_factored(rng, &factor, &(wx / sigma2)))
}

impl Sampler {
    /// Joint redraw of each row `[μ_mj, Λ_mj·, Γ_mj·]`.
    pub fn update_loadings(&self, s: &mut ModelState, t: usize) -> Result<()> {
        let n = self.data.n;
        for m in 0..self.data.n_views() {
            let obs = &self.data.views[m];
            let vs = &s.views[m];
            let (k, km, p) = (vs.k(), vs.k_m(), vs.p());
            let w = design(n, &[&s.eta, &vs.phi]);
            let gram_full = w.tr_mul(&w);
            let wx = w.tr_mul(&obs.x);
            let mut prior = Vec::with_capacity(1 + k + km);
            prior.push(1.0 / self.config.hyper.upsilon2);
            prior.extend(vs.tau2.iter().map(|v| 1.0 / v));
            prior.extend(vs.chi2.iter().map(|v| 1.0 / v));
            let weights = obs.weights.as_slice();
            let rows = map_indices(p, |j| {
                let mut rng = self.stream(VarKind::Loadings, m, j, t);
                let rhs = wx.column(j).into_owned();
                if obs.col_missing[j] {
                    let gram = weighted_gram(&w, &weights[j * n..(j + 1) * n]);
                    draw_row(&mut rng, &gram, rhs, &prior, vs.sigma2[j])
                } else {
                    draw_row(&mut rng, &gram_full, rhs, &prior, vs.sigma2[j])
                }
            })?;
            let vs = &mut s.views[m];
            for (j, row) in rows.iter().enumerate() {
                vs.mu[j] = row[0];
                for h in 0..k {
                    vs.lambda[(j, h)] = row[1 + h];
                }
                for h in 0..km {
                    vs.gamma[(j, h)] = row[1 + k + h];
                }
            }
        }
        Ok(())
    }

    /// Joint redraw of `[μ_y, θ, θ_1, …, θ_M]`.
    pub fn update_response_coefficients(&self, s: &mut ModelState, t: usize) -> Result<()> {
        let (Some(y), Some(resp)) = (&self.data.y, &s.response) else {
            return Ok(());
        };
        let hp = &self.config.hyper;
        let f = s.stacked_factors();
        let w = design(self.data.n, &[&f]);
        let gram = w.tr_mul(&w);
        let wy = w.tr_mul(y);
        let mut prior = Vec::with_capacity(w.ncols());
        prior.push(1.0 / hp.upsilon2_y);
        prior.extend(resp.stacked_activity().iter().map(|&r| 1.0 / if r { resp.psi2_o } else { hp.psi2_inf }));
        let mut rng = self.stream(VarKind::ResponseCoefficients, 0, 0, t);
        let row = draw_row(&mut rng, &gram, wy, &prior, resp.sigma2)?;
        let resp = s.response.as_mut().expect("response present");
        resp.mu = row[0];
        resp.set_stacked_theta(&row.rows(1, row.len() - 1).into_owned());
        Ok(())
    }
}
