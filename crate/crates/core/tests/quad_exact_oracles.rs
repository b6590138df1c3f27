use ironfi::experiments::{run_ensemble, slope_fit, EnsembleConfig, Init, Problem};
use ironfi::inner::InnerConfig;
use ironfi::iron::*;
use ironfi::linalg::{Matrix, Vector};
use ironfi::objectives::{random_orthogonal, Quadratic};
use ironfi::quad_exact::*;
use ironfi::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn bench_quad(seed: u64) -> Quadratic {
    Quadratic::from_spectrum(&[1.0, 1.0, 3.0], &random_orthogonal(3, seed), 1.0).unwrap()
}

fn fixed_point_iterate(m: &Mat2, q: &Mat2, iters: usize) -> Mat2 {
    let mt = transpose2(m);
    let mut p = [[0.0; 2]; 2];
    for _ in 0..iters {
        let mp = mul2(&mul2(m, &p), &mt);
        p = [[mp[0][0] + q[0][0], mp[0][1] + q[0][1]], [mp[1][0] + q[1][0], mp[1][1] + q[1][1]]];
    }
    p
}

fn diff2(a: &Mat2, b: &Mat2) -> Mat2 {
    [[a[0][0] - b[0][0], a[0][1] - b[0][1]], [a[1][0] - b[1][0], a[1][1] - b[1][1]]]
}

#[test]
fn recursion_matches_simulator_step_for_step() {
    for closed_form in [false, true] {
        let quad = bench_quad(5);
        let xs = quad.minimizer().clone();
        let eig = quad.eigen().clone();
        let (alpha, gamma, mu) = (7.0, 1.0, 1.0);
        let recs: Vec<EigenRecursion> =
            eig.values.iter().map(|&a| eigen_recursion(a, alpha, gamma, mu, 0.2).unwrap()).collect();
        let inner = InnerConfig { closed_form, ..InnerConfig::with_tol(1e-14) };
        let dynamics = Dynamics::new(mu, GammaMode::Fixed);
        let mut state = IronState::new(
            Vector::from_vec(vec![1.0, 2.0, -1.0]),
            Vector::from_vec(vec![0.5, -0.5, 3.0]),
            gamma,
        )
        .unwrap();
        let mut z: Vec<[f64; 2]> = (0..3)
            .map(|i| {
                let vi = eig.vectors.column(i);
                [vi.dot(&(&state.x - &xs)), vi.dot(&(&state.v - &xs))]
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let xi = Vector::from_fn(3, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
            state = outer_step_with_noise(&state, &quad, alpha, &dynamics, &xi, &inner).unwrap().0;
            for (i, zi) in z.iter_mut().enumerate() {
                let vi = eig.vectors.column(i);
                *zi = recs[i].step(*zi, vi.dot(&xi));
                let e = vi.dot(&(&state.x - &xs));
                let w = vi.dot(&(&state.v - &xs));
                assert!((e - zi[0]).abs() < 1e-12, "e {e} vs {}", zi[0]);
                assert!((w - zi[1]).abs() < 1e-12, "w {w} vs {}", zi[1]);
            }
        }
    }
}

#[test]
fn linear_solve_matches_fixed_point_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    while checked < 100 {
        let m: Mat2 = [[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)], [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]];
        if spectral_radius(&m) > 0.9 {
            continue;
        }
        let (g0, g1) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let q: Mat2 = [[g0 * g0 + 0.1, g0 * g1], [g0 * g1, g1 * g1 + 0.1]];
        let exact = lyapunov_solve_2x2(&m, &q).unwrap().p.unwrap();
        let iterated = fixed_point_iterate(&m, &q, 10_000);
        assert!(frobenius2(&diff2(&exact, &iterated)) < 1e-10);
        assert!(lyapunov_residual(&m, &exact, &q) < 1e-12);
        checked += 1;
    }
}

#[test]
fn recursion_covariances_match_fixed_point_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let mu = rng.random_range(0.1..2.0);
        let a = mu * rng.random_range(1.0..20.0);
        let alpha = 10f64.powf(rng.random_range(0.0..4.0));
        let gamma = rng.random_range(0.2..3.0);
        let rec = eigen_recursion(a, alpha, gamma, mu, 0.3).unwrap();
        let cov = lyapunov_solve(&rec).unwrap();
        if !cov.stable {
            continue;
        }
        let iterated = fixed_point_iterate(&rec.m, &rec.q(), 10_000);
        assert!(frobenius2(&diff2(&cov.p.unwrap(), &iterated)) < 1e-10);
    }
}

#[test]
fn asymptotic_constant_is_recovered() {
    let quad = bench_quad(0);
    let c_quad = asymptotic_constant(&quad, 1.0, 0.1);
    assert!((c_quad - 0.01 * 19.0 / 9.0).abs() < 1e-14);
    let scaled = 1e4 * stationary_mse_exact(&quad, 1e4, 1.0, 1.0, 0.1).unwrap();
    assert!((scaled / c_quad - 1.0).abs() < 0.02);
    let gap_small = (1e2 * stationary_mse_exact(&quad, 1e2, 1.0, 1.0, 0.1).unwrap() / c_quad - 1.0).abs();
    assert!((scaled / c_quad - 1.0).abs() < gap_small);
}

#[test]
fn exact_curve_has_unit_slope_at_large_alpha() {
    let quad = bench_quad(0);
    let alphas = [50.0, 100.0, 200.0, 500.0, 1000.0];
    let mses: Vec<f64> = alphas.iter().map(|&a| stationary_mse_exact(&quad, a, 1.0, 1.0, 0.1).unwrap()).collect();
    let fit = slope_fit(&alphas, &mses, &[]).unwrap();
    assert!((-1.05..=-0.95).contains(&fit.slope), "slope {}", fit.slope);
}

#[test]
fn silent_noise_gives_zero_covariance() {
    let quad = bench_quad(1);
    assert_eq!(stationary_mse_exact(&quad, 10.0, 1.0, 1.0, 0.0).unwrap(), 0.0);
}

#[test]
fn non_commuting_noise_is_refused() {
    let quad = Quadratic::new(Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 3.0])), Vector::zeros(2)).unwrap();
    let root = Matrix::from_row_slice(2, 2, &[1.0, 0.4, 0.0, 1.0]);
    let kind = NoiseKind::General { sigma_sqrt: root };
    assert!(matches!(stationary_mse_exact_with(&quad, 10.0, 1.0, 1.0, &kind), Err(Error::NonDecoupling(_))));
    let diag = NoiseKind::General { sigma_sqrt: Matrix::from_diagonal(&Vector::from_vec(vec![0.1, 0.2])) };
    let exact = stationary_mse_exact_with(&quad, 10.0, 1.0, 1.0, &diag).unwrap();
    let by_hand: f64 = [(1.0, 0.1), (3.0, 0.2)]
        .iter()
        .map(|&(a, r)| lyapunov_solve(&eigen_recursion(a, 10.0, 1.0, 1.0, r).unwrap()).unwrap().p11().unwrap())
        .sum();
    assert!((exact - by_hand).abs() < 1e-15);
}

#[test]
fn monte_carlo_agrees_with_exact_covariance() {
    let quad = bench_quad(0);
    let xs = quad.minimizer().clone();
    let noise = NoiseModel::isotropic(0.1, 17);
    let inner = InnerConfig::default();
    let problem = Problem {
        obj: &quad,
        x_star: Some(&xs),
        dynamics: Dynamics::new(1.0, GammaMode::Fixed),
        gamma0: 1.0,
        noise: &noise,
        inner: &inner,
    };
    let cfg = EnsembleConfig {
        n_particles: 4000,
        n_steps: 80,
        burn_in_fraction: 0.5,
        alpha_grid: vec![10.0],
        seeds: vec![0],
        init: Init::Point { x0: xs.clone(), v0: xs.clone() },
    };
    let stats = run_ensemble(&cfg, &problem, 10.0).unwrap();
    let exact = stationary_mse_exact(&quad, 10.0, 1.0, 1.0, 0.1).unwrap();
    let mc = stats.stationary_mse.unwrap();
    assert!((mc - exact).abs() <= 3.0 * stats.stationary_se.unwrap(), "mc {mc} exact {exact}");
}
