use jafar_core::config::{Family, ModelConfig, PriorVariant, RankBounds};
use jafar_core::data::{MultiviewDataset, View};
use jafar_core::gibbs::{apply_fulld_weights, run_chain, run_chain_with, Sampler};
use nalgebra::{DMatrix, DVector};

fn dataset(values: &[DMatrix<f64>], y: Option<DVector<f64>>) -> MultiviewDataset {
    let views = values
        .iter()
        .enumerate()
        .map(|(m, x)| View::complete(format!("v{m}"), x.clone()).unwrap())
        .collect();
    MultiviewDataset::new(views, y, None).unwrap()
}

fn unsupervised_jfr(k: usize) -> ModelConfig {
    let mut c = ModelConfig::jfr();
    c.supervised = false;
    c.rank_bounds = RankBounds { k_max: k, k_m_max: Vec::new() };
    c.adaptation.enabled = false;
    c
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0))
}

/// Asserts a sample mean sits within four standard errors of `target`.
fn close(x: &[f64], target: f64) {
    let (m, v) = mean_var(x);
    let se = (v / x.len() as f64).sqrt();
    assert!((m - target).abs() < 4.0 * se, "mean {m} vs {target} (se {se})");
}

#[test]
fn intercept_conjugate_draw() {
    let data = dataset(&[DMatrix::from_element(1, 1, 1.0)], None);
    let sampler = Sampler::new(&unsupervised_jfr(1), &data).unwrap();
    let mut s = sampler.initialize().unwrap();
    s.eta.fill(0.0);
    s.views[0].sigma2[0] = 1.0;
    let draws: Vec<f64> = (1..=40_000)
        .map(|t| {
            sampler.update_loadings(&mut s, t).unwrap();
            s.views[0].mu[0]
        })
        .collect();
    close(&draws, 0.2);
    let (_, v) = mean_var(&draws);
    assert!((v - 0.2).abs() < 0.01, "{v}");
}

#[test]
fn zero_residual_variance_draw() {
    let data = dataset(&[DMatrix::from_element(4, 1, 1.0)], None);
    let mut cfg = unsupervised_jfr(1);
    cfg.hyper.a_sigma = 3.0;
    cfg.hyper.b_sigma = 1.0;
    let sampler = Sampler::new(&cfg, &data).unwrap();
    let mut s = sampler.initialize().unwrap();
    s.views[0].mu[0] = 1.0;
    s.views[0].lambda.fill(0.0);
    let draws: Vec<f64> = (1..=40_000)
        .map(|t| {
            sampler.update_variances(&mut s, t).unwrap();
            s.views[0].sigma2[0]
        })
        .collect();
    // InvGa(5, 1)
    close(&draws, 0.25);
}

#[test]
fn scalar_factor_conditional() {
    let x = 1.3;
    let data = dataset(&[DMatrix::from_element(1, 1, x)], None);
    let sampler = Sampler::new(&unsupervised_jfr(1), &data).unwrap();
    let mut s = sampler.initialize().unwrap();
    s.views[0].lambda.fill(1.0);
    s.views[0].mu[0] = 0.0;
    s.views[0].sigma2[0] = 1.0;
    let draws: Vec<f64> = (1..=40_000)
        .map(|t| {
            sampler.update_factors(&mut s, t).unwrap();
            s.eta[(0, 0)]
        })
        .collect();
    close(&draws, x / 2.0);
    let (_, v) = mean_var(&draws);
    assert!((v - 0.5).abs() < 0.02, "{v}");
}

#[test]
fn stick_counts_by_hand() {
    let data = dataset(&[DMatrix::from_fn(5, 2, |i, j| (i * 2 + j) as f64)], None);
    let mut cfg = unsupervised_jfr(2);
    cfg.hyper.alpha_lambda = vec![2.0];
    let sampler = Sampler::new(&cfg, &data).unwrap();
    let mut s = sampler.initialize().unwrap();
    let draws: Vec<f64> = (1..=40_000)
        .map(|t| {
            s.views[0].zeta = vec![1, 0];
            sampler.update_sticks(&mut s, t).unwrap();
            s.views[0].nu[0]
        })
        .collect();
    // Be(2, α + 1)
    close(&draws, 2.0 / 5.0);
}

#[test]
fn active_zero_column_hypervariance() {
    let data = dataset(&[DMatrix::from_fn(4, 10, |i, j| ((i + 1) * (j + 2)) as f64)], None);
    let sampler = Sampler::new(&unsupervised_jfr(2), &data).unwrap();
    let mut s = sampler.initialize().unwrap();
    s.views[0].lambda.fill(0.0);
    s.views[0].zeta = vec![1, 1];
    let draws: Vec<f64> = (1..=40_000)
        .map(|t| {
            sampler.update_hypervariances(&mut s, t).unwrap();
            s.views[0].tau2[0]
        })
        .collect();
    // InvGa(0.5 + 5, 0.1)
    close(&draws, 0.1 / 4.5);
}

fn two_view_data(n: usize, p: &[usize]) -> MultiviewDataset {
    let mats: Vec<DMatrix<f64>> = p
        .iter()
        .enumerate()
        .map(|(m, &pm)| DMatrix::from_fn(n, pm, |i, j| ((i * 7 + j * 3 + m) % 11) as f64 - 5.0))
        .collect();
    dataset(&mats, None)
}

#[test]
fn fulld_weight_examples() {
    let data = two_view_data(6, &[3, 3]);
    let mut cfg = ModelConfig::jafar(PriorVariant::FullD);
    cfg.supervised = false;
    cfg.rank_bounds = RankBounds { k_max: 2, k_m_max: vec![1] };
    let sampler = Sampler::new(&cfg, &data).unwrap();
    let mut s = sampler.initialize().unwrap();
    s.views[0].nu = vec![0.0, 1.0];
    s.views[1].nu = vec![0.3, 1.0];
    let w = apply_fulld_weights(&s);
    assert!((w[1][0] - 0.7).abs() < 1e-15);
    assert!((w[0][0] - 0.7).abs() < 1e-15);
    s.views[0].nu = vec![1.0, 1.0];
    assert_eq!(apply_fulld_weights(&s)[1][0], 0.0);
}

#[test]
fn initial_state_shape_and_reproducibility() {
    let data = two_view_data(8, &[4, 5]);
    let mut cfg = ModelConfig::jafar(PriorVariant::DCusp);
    cfg.supervised = false;
    cfg.rank_bounds = RankBounds { k_max: 5, k_m_max: vec![3] };
    let a = Sampler::new(&cfg, &data).unwrap().initialize().unwrap();
    let b = Sampler::new(&cfg, &data).unwrap().initialize().unwrap();
    assert_eq!(a.k(), 5);
    assert_eq!(a, b);

    let jfr = unsupervised_jfr(5);
    let s = Sampler::new(&jfr, &data).unwrap().initialize().unwrap();
    assert_eq!(s.family, Family::Jfr);
    assert!(s.views.iter().all(|v| v.k_m() == 0 && v.phi.ncols() == 0 && v.delta.is_empty()));
}

#[test]
fn tempering_coefficient() {
    let data = dataset(&[DMatrix::from_fn(50, 1000, |i, j| ((i * 31 + j * 17) % 13) as f64)], None);
    let mut cfg = unsupervised_jfr(2);
    cfg.tempering = true;
    let sampler = Sampler::new(&cfg, &data).unwrap();
    assert!((sampler.temper[0] - 0.05).abs() < 1e-15);
}

#[test]
fn thinning_and_reproducibility() {
    let data = two_view_data(10, &[4, 3]);
    let mut cfg = ModelConfig::jafar(PriorVariant::DCusp);
    cfg.supervised = false;
    cfg.rank_bounds = RankBounds { k_max: 3, k_m_max: vec![2] };
    cfg.mcmc.t_mcmc = 10;
    cfg.mcmc.t_burnin = 5;
    cfg.mcmc.t_thin = 2;
    let a = run_chain(&cfg, &data).unwrap();
    assert_eq!(a.iterations, vec![7, 9]);
    assert_eq!(a.ranks.len(), 10);
    let b = run_chain(&cfg, &data).unwrap();
    assert_eq!(a.states, b.states);
}

#[test]
fn collapsed_matches_joint_without_specifics() {
    let data = two_view_data(12, &[5, 4]);
    let mut cfg = ModelConfig::jafar(PriorVariant::DCusp);
    cfg.supervised = false;
    cfg.rank_bounds = RankBounds { k_max: 3, k_m_max: vec![2] };
    let sampler = Sampler::new(&cfg, &data).unwrap();
    let s0 = sampler.initialize_with_ranks(3, &[0, 0]).unwrap();
    let (mut a, mut b) = (s0.clone(), s0);
    sampler.update_factors_joint(&mut a, 4).unwrap();
    sampler.update_factors_collapsed(&mut b, 4).unwrap();
    assert_eq!(a.eta, b.eta);
}

#[test]
fn dcusp_columns_survive_only_when_shared() {
    let data = two_view_data(30, &[6, 8]);
    let mut cfg = ModelConfig::jafar(PriorVariant::DCusp);
    cfg.supervised = false;
    cfg.rank_bounds = RankBounds { k_max: 6, k_m_max: vec![4] };
    cfg.mcmc.t_mcmc = 400;
    cfg.mcmc.t_burnin = 200;
    cfg.mcmc.t_thin = 10;
    cfg.adaptation.t_adapt = 20;
    let mut events = 0;
    run_chain_with(&cfg, &data, &mut |p| {
        if let Some(e) = p.event {
            if let jafar_core::gibbs::RankChange::Dropped(_) = e.shared {
                events += 1;
                let s = p.state;
                for h in 0..s.k() - 1 {
                    assert!(s.shared_activity_count(h) >= 2, "column {h} at {}", p.iteration);
                }
            }
        }
    })
    .unwrap();
    assert!(events > 0);
}
