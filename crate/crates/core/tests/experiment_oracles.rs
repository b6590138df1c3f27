use ironfi::experiments::*;
use ironfi::inner::InnerConfig;
use ironfi::iron::*;
use ironfi::linalg::Vector;
use ironfi::objectives::{random_orthogonal, Quadratic, RidgeLogistic};
use ironfi::Objective;

fn bench_quad() -> Quadratic {
    Quadratic::from_spectrum(&[1.0, 1.0, 3.0], &random_orthogonal(3, 0), 1.0).unwrap()
}

fn quad_cfg(n_particles: usize, n_steps: usize, xs: &Vector) -> EnsembleConfig {
    EnsembleConfig {
        n_particles,
        n_steps,
        burn_in_fraction: 0.5,
        alpha_grid: vec![10.0],
        seeds: vec![0],
        init: Init::GaussianBall { center: xs.clone(), radius: 0.5 },
    }
}

#[test]
fn reference_minimizer_matches_noiseless_dynamics() {
    let obj = RidgeLogistic::synthetic(1000, 20, 0.1, 0).unwrap();
    let w = reference_minimizer(&obj, 1e-12).unwrap();
    assert!(obj.gradient(&w).unwrap().norm() <= 1e-12);

    let s0 = IronState::at_rest(Vector::zeros(20), 1.0).unwrap();
    let t = run_trajectory(
        &s0,
        &obj,
        &Schedule::Constant(1e3),
        &Dynamics::new(0.1, GammaMode::Updated),
        &NoiseModel::isotropic(0.0, 0),
        // λ ≈ 5·10³ puts the residual floor near 1e-13
        &InnerConfig::with_tol(1e-11),
        100,
        0,
    )
    .unwrap();
    let last = &t.states.last().unwrap().x;
    assert!((last - &w).norm() < 1e-8, "distance {}", (last - &w).norm());
}

#[test]
fn decomposition_is_exact_on_every_iteration() {
    let quad = bench_quad();
    let xs = quad.minimizer().clone();
    let noise = NoiseModel::isotropic(0.1, 3);
    let inner = InnerConfig::default();
    let problem = Problem {
        obj: &quad,
        x_star: Some(&xs),
        dynamics: Dynamics::new(1.0, GammaMode::Updated),
        gamma0: 3.0,
        noise: &noise,
        inner: &inner,
    };
    let shifted = Init::GaussianBall { center: &xs + Vector::from_element(3, 2.0), radius: 0.2 };
    let cfg = EnsembleConfig { init: shifted, ..quad_cfg(500, 40, &xs) };
    let stats = run_ensemble(&cfg, &problem, 5.0).unwrap();
    assert!(stats.max_decomposition_defect() <= 1e-12);
    for s in &stats.series {
        assert!(s.mse.unwrap() >= 0.0 && s.bias_sq.unwrap() >= 0.0 && s.cov_trace >= 0.0);
        let var_sum: f64 = s.coord_var.iter().sum();
        assert!((var_sum - s.cov_trace).abs() <= 1e-12 * s.cov_trace.max(1e-300));
    }
}

#[test]
fn doubling_particles_shrinks_standard_error() {
    let quad = bench_quad();
    let xs = quad.minimizer().clone();
    let inner = InnerConfig::default();
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let noise = NoiseModel::isotropic(0.1, 100 + seed);
        let problem = Problem {
            obj: &quad,
            x_star: Some(&xs),
            dynamics: Dynamics::new(1.0, GammaMode::Fixed),
            gamma0: 1.0,
            noise: &noise,
            inner: &inner,
        };
        let se = |n| run_ensemble(&quad_cfg(n, 40, &xs), &problem, 10.0).unwrap().stationary_se.unwrap();
        ratios.push(se(1000) / se(2000));
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 2f64.sqrt()).abs() < 0.15, "SE ratio {mean}");
}

#[test]
fn tight_tolerances_agree_on_quadratic() {
    let quad = bench_quad();
    let xs = quad.minimizer().clone();
    let noise = NoiseModel::isotropic(0.1, 8);
    let inner = InnerConfig::default();
    let problem = Problem {
        obj: &quad,
        x_star: Some(&xs),
        dynamics: Dynamics::new(1.0, GammaMode::Fixed),
        gamma0: 1.0,
        noise: &noise,
        inner: &inner,
    };
    let rows = tolerance_sweep(&quad_cfg(500, 40, &xs), &problem, &[10.0, 100.0], &[1e-12, 1e-10]).unwrap();
    assert_eq!(rows.len(), 4);
    for pair in rows.chunks(2) {
        let rel = (pair[0].stationary_mse - pair[1].stationary_mse).abs() / pair[0].stationary_mse;
        assert!(rel < 1e-4, "relative difference {rel}");
        assert!(pair.iter().all(|r| r.mean_inner_iters >= 1.0));
    }
}

#[test]
fn noiseless_quadratic_cloud_collapses() {
    let quad = bench_quad();
    let xs = quad.minimizer().clone();
    let noise = NoiseModel::isotropic(0.0, 0);
    let inner = InnerConfig::default();
    let problem = Problem {
        obj: &quad,
        x_star: None,
        dynamics: Dynamics::new(1.0, GammaMode::Fixed),
        gamma0: 1.0,
        noise: &noise,
        inner: &inner,
    };
    let stats = run_ensemble(&quad_cfg(200, 60, &xs), &problem, 2.0).unwrap();
    let spreads: Vec<f64> = stats.series.iter().map(|s| s.cov_trace).collect();
    assert!(spreads[0] > 0.1);
    assert!(*spreads.last().unwrap() < 1e-20);
    assert!(stats.stationary_mse.is_none());
}
