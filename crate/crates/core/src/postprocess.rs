//! Rotation, label and sign alignment of posterior loading samples.
//!
//! Shared loadings are rotated by the multiview Varimax criterion (the sum
//! of per-view Varimax objectives), each specific block by the classical
//! one; every sample is then greedily matched to a pivot sample by a signed
//! column permutation. Factors and response coefficients follow the same
//! orthogonal transform, so induced covariances and `θᵀη` are unchanged.

use alloc::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gibbs::{map_indices, ChainArchive};
use crate::prelude::*;
use crate::state::ModelState;

const MAX_SWEEPS: usize = 500;
const TOL: f64 = 1e-8;

/// Varimax objective of one matrix: within-column variances of the squared loadings.
pub fn varimax_objective(a: &DMatrix<f64>) -> f64 {
    let p = a.nrows() as f64;
    if a.nrows() == 0 {
        return 0.0;
    }
    a.column_iter()
        .map(|c| {
            let (mut s2, mut s4) = (0.0, 0.0);
            for v in c.iter() {
                let q = v * v;
                s2 += q;
                s4 += q * q;
            }
            s4 / p - (s2 / p) * (s2 / p)
        })
        .sum()
}

pub fn multiview_objective(blocks: &[DMatrix<f64>]) -> f64 {
    blocks.iter().map(varimax_objective).sum()
}

/// Objective contribution of columns `a`, `b` after rotating them by `phi`.
fn pair_objective(blocks: &[DMatrix<f64>], a: usize, b: usize, phi: f64) -> f64 {
    let (c, s) = (phi.cos(), phi.sin());
    let mut total = 0.0;
    for m in blocks {
        if m.nrows() == 0 {
            continue;
        }
        let p = m.nrows() as f64;
        let (mut x2, mut y2, mut x4, mut y4) = (0.0, 0.0, 0.0, 0.0);
        for j in 0..m.nrows() {
            let (u, v) = (m[(j, a)], m[(j, b)]);
            let x = c * u + s * v;
            let y = -s * u + c * v;
            let (xx, yy) = (x * x, y * y);
            x2 += xx;
            y2 += yy;
            x4 += xx * xx;
            y4 += yy * yy;
        }
        total += (x4 + y4) / p - (x2 / p) * (x2 / p) - (y2 / p) * (y2 / p);
    }
    total
}

fn rotate_pair(m: &mut DMatrix<f64>, a: usize, b: usize, phi: f64) {
    let (c, s) = (phi.cos(), phi.sin());
    for j in 0..m.nrows() {
        let (u, v) = (m[(j, a)], m[(j, b)]);
        m[(j, a)] = c * u + s * v;
        m[(j, b)] = -s * u + c * v;
    }
}

#[derive(Debug, Clone)]
pub struct VarimaxResult {
    /// Orthogonal K × K rotation; rotated blocks are `Λ_m R`.
    pub rotation: DMatrix<f64>,
    pub objective: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// Maximizes `Σ_m V(Λ_m R)` by sweeps of plane rotations.
///
/// The two-column objective is exactly `A + B cos 4φ + C sin 4φ`, so each
/// plane rotation uses the angle `atan2(C, B) / 4` read off three evaluations.
pub fn multiview_varimax(blocks: &[DMatrix<f64>]) -> VarimaxResult {
    let k = blocks.first().map_or(0, |b| b.ncols());
    let mut work: Vec<DMatrix<f64>> = blocks.to_vec();
    let mut rotation = DMatrix::<f64>::identity(k, k);
    let mut objective = multiview_objective(&work);
    if k < 2 {
        return VarimaxResult { rotation, objective, sweeps: 0, converged: true };
    }
    let quarter = core::f64::consts::FRAC_PI_4;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        for a in 0..k - 1 {
            for b in a + 1..k {
                let f0 = pair_objective(&work, a, b, 0.0);
                let f1 = pair_objective(&work, a, b, 0.5 * quarter);
                let f2 = pair_objective(&work, a, b, quarter);
                let base = 0.5 * (f0 + f2);
                let (cb, cs) = (0.5 * (f0 - f2), f1 - base);
                if (cb * cb + cs * cs).sqrt() - cb <= 1e-15 * (1.0 + f0.abs()) {
                    continue;
                }
                let phi = 0.25 * cs.atan2(cb);
                for m in &mut work {
                    rotate_pair(m, a, b, phi);
                }
                rotate_pair(&mut rotation, a, b, phi);
            }
        }
        let next = multiview_objective(&work);
        let gain = next - objective;
        objective = next;
        if gain < TOL {
            converged = true;
            break;
        }
    }
    VarimaxResult { rotation, objective, sweeps, converged }
}

/// Signed permutation taking a sample's columns onto the pivot's:
/// aligned column `c` is `signs[c] · sample[:, perm[c]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedPermutation {
    pub perm: Vec<usize>,
    pub signs: Vec<f64>,
}

impl SignedPermutation {
    pub fn identity(k: usize) -> Self {
        Self { perm: (0..k).collect(), signs: vec![1.0; k] }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let k = self.perm.len();
        let mut p = DMatrix::zeros(k, k);
        for (c, (&j, &s)) in self.perm.iter().zip(&self.signs).enumerate() {
            p[(j, c)] = s;
        }
        p
    }
}

/// Greedy matching: pivot columns in order each take the nearest unused
/// sample column, allowing a sign flip.
pub fn match_columns(sample: &DMatrix<f64>, pivot: &DMatrix<f64>) -> SignedPermutation {
    let k = pivot.ncols();
    let mut used = vec![false; k];
    let mut out = SignedPermutation { perm: Vec::with_capacity(k), signs: Vec::with_capacity(k) };
    for c in 0..k {
        let target = pivot.column(c);
        let mut best = (f64::INFINITY, 0, 1.0);
        for j in (0..k).filter(|&j| !used[j]) {
            let col = sample.column(j);
            for sign in [1.0, -1.0] {
                let d = (target - col * sign).norm_squared();
                if d < best.0 {
                    best = (d, j, sign);
                }
            }
        }
        used[best.1] = true;
        out.perm.push(best.1);
        out.signs.push(best.2);
    }
    out
}

/// Composite orthogonal transform of one block.
#[derive(Debug, Clone)]
pub struct BlockTransform {
    pub rotation: DMatrix<f64>,
    pub matching: SignedPermutation,
}

impl BlockTransform {
    /// `R P`, applied on the right of loadings and factors.
    pub fn composite(&self) -> DMatrix<f64> {
        &self.rotation * self.matching.matrix()
    }
}

#[derive(Debug, Clone)]
pub struct AlignedChain {
    pub states: Vec<ModelState>,
    /// Archive positions of the aligned states.
    pub source: Vec<usize>,
    /// Archive positions dropped because their ranks differ from the modal ranks.
    pub excluded: Vec<usize>,
    pub shared: Vec<BlockTransform>,
    /// Per sample, per view.
    pub specific: Vec<Vec<BlockTransform>>,
    /// Position of the pivot within `states`.
    pub pivot: usize,
    pub objectives: Vec<f64>,
    pub max_sweeps: usize,
    pub all_converged: bool,
}

/// Applies shared transform `t` and specific transforms `ts` to a state.
pub fn transform_state(s: &ModelState, t: &DMatrix<f64>, ts: &[DMatrix<f64>]) -> ModelState {
    let mut out = s.clone();
    out.eta = &s.eta * t;
    for (m, v) in out.views.iter_mut().enumerate() {
        v.lambda = &s.views[m].lambda * t;
        v.gamma = &s.views[m].gamma * &ts[m];
        v.phi = &s.views[m].phi * &ts[m];
    }
    if let Some(r) = out.response.as_mut() {
        r.theta = t.tr_mul(&r.theta);
        for (m, th) in r.theta_m.iter_mut().enumerate() {
            *th = ts[m].tr_mul(th);
        }
    }
    out
}

fn stack_rows(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let k = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, k);
    let mut off = 0;
    for b in blocks {
        out.rows_mut(off, b.nrows()).copy_from(b);
        off += b.nrows();
    }
    out
}

pub fn postprocess_chain(archive: &ChainArchive) -> Result<AlignedChain> {
    let mut tally: BTreeMap<(usize, Vec<usize>), usize> = BTreeMap::new();
    for s in &archive.states {
        *tally.entry(s.ranks()).or_default() += 1;
    }
    let Some(modal) = tally.iter().max_by_key(|(_, c)| **c).map(|(r, _)| r.clone()) else {
        return Err(Error::arg("archive holds no states"));
    };
    let (source, excluded): (Vec<usize>, Vec<usize>) = (0..archive.states.len()).partition(|&i| archive.states[i].ranks() == modal);
    if source.len() < 2 {
        return Err(Error::arg("fewer than two samples share the modal ranks"));
    }
    let n_views = archive.states[0].n_views();

    struct Rotated {
        shared: VarimaxResult,
        specific: Vec<VarimaxResult>,
    }
    let rotated = map_indices(source.len(), |i| {
        let s = &archive.states[source[i]];
        let shared_blocks: Vec<DMatrix<f64>> = s.views.iter().map(|v| v.lambda.clone()).collect();
        let specific = s.views.iter().map(|v| multiview_varimax(core::slice::from_ref(&v.gamma))).collect();
        Ok(Rotated { shared: multiview_varimax(&shared_blocks), specific })
    })?;

    let shared_rot: Vec<DMatrix<f64>> = source
        .iter()
        .zip(&rotated)
        .map(|(&i, r)| {
            let s = &archive.states[i];
            let blocks: Vec<&DMatrix<f64>> = s.views.iter().map(|v| &v.lambda).collect();
            stack_rows(&blocks) * &r.shared.rotation
        })
        .collect();
    let norms: Vec<f64> = shared_rot.iter().map(|m| m.norm()).collect();
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]));
    let pivot = order[order.len() / 2];

    let specific_rot = |i: usize, m: usize| -> DMatrix<f64> {
        &archive.states[source[i]].views[m].gamma * &rotated[i].specific[m].rotation
    };
    let pivot_specific: Vec<DMatrix<f64>> = (0..n_views).map(|m| specific_rot(pivot, m)).collect();

    let mut out = AlignedChain {
        states: Vec::with_capacity(source.len()),
        source: source.clone(),
        excluded,
        shared: Vec::with_capacity(source.len()),
        specific: Vec::with_capacity(source.len()),
        pivot,
        objectives: Vec::with_capacity(source.len()),
        max_sweeps: 0,
        all_converged: true,
    };
    for (i, r) in rotated.iter().enumerate() {
        let shared = BlockTransform {
            rotation: r.shared.rotation.clone(),
            matching: match_columns(&shared_rot[i], &shared_rot[pivot]),
        };
        let specific: Vec<BlockTransform> = (0..n_views)
            .map(|m| BlockTransform {
                rotation: r.specific[m].rotation.clone(),
                matching: match_columns(&specific_rot(i, m), &pivot_specific[m]),
            })
            .collect();
        let ts: Vec<DMatrix<f64>> = specific.iter().map(BlockTransform::composite).collect();
        out.states.push(transform_state(&archive.states[source[i]], &shared.composite(), &ts));
        out.objectives.push(r.shared.objective);
        let sweeps = core::iter::once(&r.shared).chain(&r.specific);
        for v in sweeps {
            out.max_sweeps = out.max_sweeps.max(v.sweeps);
            out.all_converged &= v.converged;
        }
        out.shared.push(shared);
        out.specific.push(specific);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_objective_and_fixed_point() {
        let eye = DMatrix::<f64>::identity(2, 2);
        assert!((varimax_objective(&eye) - 0.5).abs() < 1e-15);
        let r = multiview_varimax(&[eye.clone()]);
        assert!((r.rotation.abs() - eye).abs().max() < 1e-12);
    }

    #[test]
    fn pair_objective_is_a_quarter_wave() {
        let a = DMatrix::from_row_slice(4, 2, &[0.3, 1.2, -0.7, 0.1, 0.5, 0.5, 2.0, -0.4]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, -0.3, 0.9, 0.4, 0.4]);
        let blocks = [a, b];
        let q = core::f64::consts::FRAC_PI_4;
        let (f0, f1, f2) =
            (pair_objective(&blocks, 0, 1, 0.0), pair_objective(&blocks, 0, 1, 0.5 * q), pair_objective(&blocks, 0, 1, q));
        let base = 0.5 * (f0 + f2);
        let (cb, cs) = (0.5 * (f0 - f2), f1 - base);
        for phi in [0.1, 0.37, 1.3, -0.8] {
            let f = base + cb * (4.0 * phi).cos() + cs * (4.0 * phi).sin();
            assert!((f - pair_objective(&blocks, 0, 1, phi)).abs() < 1e-12);
        }
    }

    #[test]
    fn recovers_signed_permutation() {
        let pivot = DMatrix::from_row_slice(3, 2, &[1.0, 0.1, 0.2, -2.0, 0.0, 0.5]);
        let mut sample = DMatrix::zeros(3, 2);
        sample.set_column(0, &(-pivot.column(1)));
        sample.set_column(1, &pivot.column(0));
        let m = match_columns(&sample, &pivot);
        assert_eq!(m.perm, vec![1, 0]);
        assert_eq!(m.signs, vec![1.0, -1.0]);
        assert!((&sample * m.matrix() - &pivot).abs().max() < 1e-15);
        assert_eq!(match_columns(&pivot, &pivot), SignedPermutation::identity(2));
    }
}
