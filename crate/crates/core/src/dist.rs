//! Sampling primitives and log densities used by the Gibbs updates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::prelude::*;
use crate::special::{ln_gamma, LN_2PI};

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| standard_normal(rng))
}

pub fn draw_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, var: f64) -> f64 {
    mean + var.sqrt() * standard_normal(rng)
}

pub fn draw_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return Err(Error::arg(format!("gamma needs shape, rate > 0 (got {shape}, {rate})")));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::arg(format!("{e}")))?;
    Ok(g.sample(rng))
}

/// Draws from the inverse gamma with density proportional to `x^{-shape-1} e^{-rate/x}`.
pub fn draw_inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0) {
        return Err(Error::arg(format!(
            "inverse gamma needs shape, rate > 0 (got {shape}, {rate})"
        )));
    }
    // X = rate / G with G ~ Gamma(shape, 1); floor keeps the result strictly positive.
    let g = draw_gamma(rng, shape, 1.0)?;
    Ok((rate / g).min(f64::MAX).max(f64::MIN_POSITIVE))
}

pub fn draw_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::arg(format!("beta needs a, b > 0 (got {a}, {b})")));
    }
    let d = Beta::new(a, b).map_err(|e| Error::arg(format!("{e}")))?;
    let x: f64 = d.sample(rng);
    // Keep sticks strictly inside (0, 1) so their logs stay finite.
    Ok(x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

pub fn draw_bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::arg(format!("bernoulli probability {p} outside [0, 1]")));
    }
    Ok(rng.random::<f64>() < p)
}

/// Draws an index with probability proportional to `exp(log_weights)`.
///
/// Weights are normalized by log-sum-exp; `-inf` entries get zero mass.
pub fn draw_categorical_log<R: Rng + ?Sized>(rng: &mut R, log_weights: &[f64]) -> Result<usize> {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::arg("categorical weights are all zero"));
    }
    if max == f64::INFINITY {
        return Err(Error::arg("categorical weights contain +inf"));
    }
    let total: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in log_weights.iter().enumerate() {
        let mass = (w - max).exp();
        if mass > 0.0 {
            last = i;
            if u < mass {
                return Ok(i);
            }
            u -= mass;
        }
    }
    Ok(last)
}

/// Normalized probabilities from log weights (log-sum-exp).
pub fn softmax(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn sum_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Log density of the isotropic p-variate Student-t with `df` degrees of
/// freedom, zero location and scale matrix `scale * I`.
pub fn logpdf_mvt_iso(x: &[f64], df: f64, scale: f64) -> f64 {
    let p = x.len() as f64;
    ln_gamma(0.5 * (df + p)) - ln_gamma(0.5 * df)
        - 0.5 * p * (df * core::f64::consts::PI * scale).ln()
        - 0.5 * (df + p) * (sum_sq(x) / (df * scale)).ln_1p()
}

/// Log density of the isotropic p-variate normal with zero mean and covariance `var * I`.
pub fn logpdf_normal_iso(x: &[f64], var: f64) -> f64 {
    let p = x.len() as f64;
    -0.5 * p * (LN_2PI + var.ln()) - 0.5 * sum_sq(x) / var
}

/// Draws from `N(P^{-1} b, P^{-1})` for a precision matrix `P`.
pub fn draw_mvn_from_precision<R: Rng + ?Sized>(
    rng: &mut R,
    precision: &DMatrix<f64>,
    linear_term: &DVector<f64>,
) -> Result<DVector<f64>> {
    let factor = SpdFactor::new(precision)?;
    Ok(draw_mvn_factored(rng, &factor, linear_term))
}

/// Same as [`draw_mvn_from_precision`] for a precision factorized once and reused.
pub fn draw_mvn_factored<R: Rng + ?Sized>(
    rng: &mut R,
    factor: &SpdFactor,
    linear_term: &DVector<f64>,
) -> DVector<f64> {
    let mut mean = linear_term.clone();
    factor.solve_in_place(&mut mean);
    let mut z = standard_normal_vector(rng, factor.dim());
    factor.whiten_in_place(&mut z);
    mean + z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{StreamFactory, VarKind};
    use statrs::distribution::{ContinuousCDF, Gamma as SGamma, Beta as SBeta, Normal as SNormal};

    fn rng(i: usize) -> crate::rng::RngStream {
        StreamFactory::new(2024).stream(VarKind::Test, 0, i, 0)
    }

    /// Two-sided one-sample KS statistic against `cdf`.
    fn ks_stat(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    // Critical value of the two-sided KS test at alpha = 0.001.
    fn ks_crit(n: usize) -> f64 {
        1.949 / (n as f64).sqrt()
    }

    #[test]
    fn mvn_identity_precision_moments() {
        let mut r = rng(1);
        let p = DMatrix::<f64>::identity(2, 2);
        let b = DVector::zeros(2);
        let n = 100_000;
        let (mut m, mut c) = (DVector::<f64>::zeros(2), DMatrix::<f64>::zeros(2, 2));
        let draws: Vec<_> = (0..n).map(|_| draw_mvn_from_precision(&mut r, &p, &b).unwrap()).collect();
        for d in &draws {
            m += d;
        }
        m /= n as f64;
        for d in &draws {
            let e = d - &m;
            c += &e * e.transpose();
        }
        c /= (n - 1) as f64;
        assert!(m.amax() < 0.02);
        assert!((c - DMatrix::identity(2, 2)).amax() < 0.03);
    }

    #[test]
    fn mvn_scalar_conjugate_mean() {
        let mut r = rng(2);
        let p = DMatrix::from_element(1, 1, 4.0);
        let b = DVector::from_element(1, 8.0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| draw_mvn_from_precision(&mut r, &p, &b).unwrap()[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 2.0).abs() < 0.02);
        assert!((var - 0.25).abs() < 0.01);
    }

    #[test]
    fn mvn_rejects_indefinite() {
        let mut r = rng(3);
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = draw_mvn_from_precision(&mut r, &p, &DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn inverse_gamma_means() {
        let mut r = rng(4);
        let n = 100_000;
        let m1 = (0..n).map(|_| draw_inverse_gamma(&mut r, 3.0, 1.0).unwrap()).sum::<f64>() / n as f64;
        assert!((m1 - 0.5).abs() < 0.01);
        let m2 = (0..n).map(|_| draw_inverse_gamma(&mut r, 10.0, 30.0).unwrap()).sum::<f64>() / n as f64;
        assert!((m2 - 30.0 / 9.0).abs() < 0.03);
        assert!(draw_inverse_gamma(&mut r, 0.0, 1.0).is_err());
        assert!(draw_inverse_gamma(&mut r, 1.0, -1.0).is_err());
    }

    #[test]
    fn beta_and_categorical() {
        let mut r = rng(5);
        let n = 100_000;
        let m = (0..n).map(|_| draw_beta(&mut r, 1.0, 5.0).unwrap()).sum::<f64>() / n as f64;
        assert!((m - 1.0 / 6.0).abs() < 0.005);
        let ones = (0..n).filter(|_| draw_categorical_log(&mut r, &[0.0, 0.0]).unwrap() == 0).count();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
        for _ in 0..1000 {
            assert_eq!(draw_categorical_log(&mut r, &[0.0, -1000.0]).unwrap(), 0);
        }
        assert!(draw_categorical_log(&mut r, &[f64::NEG_INFINITY; 3]).is_err());
        assert!(draw_bernoulli(&mut r, 1.5).is_err());
    }

    #[test]
    fn log_densities() {
        assert!((logpdf_normal_iso(&[0.0, 0.0], 1.0) + (2.0 * core::f64::consts::PI).ln()).abs() < 1e-14);
        assert!((logpdf_mvt_iso(&[0.0], 1.0, 1.0) - (1.0 / core::f64::consts::PI).ln()).abs() < 1e-14);
        for k in -30..=30 {
            let x = k as f64 / 10.0;
            let d = logpdf_mvt_iso(&[x], 1e6, 1.0) - logpdf_normal_iso(&[x], 1.0);
            assert!(d.abs() < 1e-3, "x={x}: {d}");
        }
    }

    #[test]
    fn samplers_pass_ks() {
        let n = 10_000;
        let mut r = rng(6);
        let xs = (0..n).map(|_| draw_gamma(&mut r, 2.5, 1.5).unwrap()).collect();
        let g = SGamma::new(2.5, 1.5).unwrap();
        assert!(ks_stat(xs, |x| g.cdf(x)) < ks_crit(n));

        let xs = (0..n).map(|_| draw_inverse_gamma(&mut r, 3.0, 1.0).unwrap()).collect();
        let g = SGamma::new(3.0, 1.0).unwrap();
        assert!(ks_stat(xs, |x| g.sf(1.0 / x)) < ks_crit(n));

        let xs = (0..n).map(|_| draw_beta(&mut r, 2.0, 5.0).unwrap()).collect();
        let b = SBeta::new(2.0, 5.0).unwrap();
        assert!(ks_stat(xs, |x| b.cdf(x)) < ks_crit(n));

        let xs = (0..n).map(|_| standard_normal(&mut r)).collect();
        let z = SNormal::new(0.0, 1.0).unwrap();
        assert!(ks_stat(xs, |x| z.cdf(x)) < ks_crit(n));

        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let f = SpdFactor::new(&p).unwrap();
        let cov = f.inverse();
        let mean = f.solve(&b);
        let xs = (0..n).map(|_| draw_mvn_factored(&mut r, &f, &b)[1]).collect();
        let marg = SNormal::new(mean[1], cov[(1, 1)].sqrt()).unwrap();
        assert!(ks_stat(xs, |x| marg.cdf(x)) < ks_crit(n));
    }
}
