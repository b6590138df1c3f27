//! Fast invariant checks that need no configuration. A broken step map,
//! resolvent or Lyapunov solver makes at least one of them fail.

use std::time::Instant;

use ironfi::experiments::{run_ensemble, EnsembleConfig, Init, Problem};
use ironfi::inner::{solve_prox, InnerConfig};
use ironfi::iron::{outer_step_with_noise, Dynamics, GammaMode, IronState, NoiseModel};
use ironfi::linalg::{Matrix, Vector};
use ironfi::objectives::{Quadratic, RidgeLogistic};
use ironfi::quad_exact::{
    eigen_recursion, lyapunov_residual, lyapunov_solve, mul2, stationary_mse_exact, transpose2,
};
use ironfi::{presets, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Outcome = ironfi::Result<(bool, String)>;

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn hand_step() -> Outcome {
    let quad = Quadratic::new(Matrix::identity(2, 2), Vector::zeros(2))?;
    let state = IronState::at_rest(Vector::from_vec(vec![3.0, 0.0]), 1.0)?;
    let dynamics = Dynamics::new(1.0, GammaMode::Fixed);
    let (next, _) =
        outer_step_with_noise(&state, &quad, 1.0, &dynamics, &Vector::zeros(2), &InnerConfig::default())?;
    let err = (next.x[0] - 2.25).abs().max(next.x[1].abs());
    Ok((err < 1e-12, format!("x⁺ = ({:.15}, {:.1e}), expected (2.25, 0)", next.x[0], next.x[1])))
}

fn recursion_vs_simulator() -> Outcome {
    let quad = presets::quadratic(0)?;
    let xs = quad.minimizer().clone();
    let eig = quad.eigen().clone();
    let (alpha, gamma, mu) = (7.0, 1.0, 1.0);
    let recs = eig
        .values
        .iter()
        .map(|&a| eigen_recursion(a, alpha, gamma, mu, 0.1))
        .collect::<ironfi::Result<Vec<_>>>()?;
    let inner = InnerConfig::with_tol(1e-14);
    let dynamics = Dynamics::new(mu, GammaMode::Fixed);
    let mut state = IronState::new(
        Vector::from_vec(vec![1.0, 2.0, -1.0]),
        Vector::from_vec(vec![0.5, -0.5, 3.0]),
        gamma,
    )?;
    let project = |i: usize, u: &Vector| eig.vectors.column(i).dot(&(u - &xs));
    let mut z: Vec<[f64; 2]> = (0..3).map(|i| [project(i, &state.x), project(i, &state.v)]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let xi = gaussian(&mut rng, 3, 0.1);
        state = outer_step_with_noise(&state, &quad, alpha, &dynamics, &xi, &inner)?.0;
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = recs[i].step(*zi, eig.vectors.column(i).dot(&xi));
            worst = worst.max((project(i, &state.x) - zi[0]).abs());
            worst = worst.max((project(i, &state.v) - zi[1]).abs());
        }
    }
    Ok((worst < 1e-12, format!("max coordinate gap {worst:.2e} over 50 steps")))
}

fn lyapunov() -> Outcome {
    let rec = eigen_recursion(3.0, 10.0, 1.0, 1.0, 0.1)?;
    let p_star = lyapunov_solve(&rec)?
        .p
        .ok_or_else(|| ironfi::Error::Degenerate("recursion unexpectedly unstable".into()))?;
    let residual = lyapunov_residual(&rec.m, &p_star, &rec.q());
    let (m, q) = (rec.m, rec.q());
    let mut p = [[0.0; 2]; 2];
    for _ in 0..5000 {
        let mpm = mul2(&mul2(&m, &p), &transpose2(&m));
        p = [[mpm[0][0] + q[0][0], mpm[0][1] + q[0][1]], [mpm[1][0] + q[1][0], mpm[1][1] + q[1][1]]];
    }
    let gap = (p[0][0] - p_star[0][0]).abs() / p_star[0][0];
    Ok((residual < 1e-12 && gap < 1e-10, format!("residual {residual:.2e}, fixed-point gap {gap:.2e}")))
}

fn contraction() -> Outcome {
    let obj = RidgeLogistic::synthetic(200, 5, 0.1, 0)?;
    let lambda = 5.0;
    let inner = InnerConfig::with_tol(1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let c1 = gaussian(&mut rng, 5, 2.0);
        let c2 = gaussian(&mut rng, 5, 2.0);
        let p1 = solve_prox(&obj, lambda, &c1, &c1, &inner)?.x;
        let p2 = solve_prox(&obj, lambda, &c2, &c2, &inner)?.x;
        worst = worst.max((&p1 - &p2).norm() * (1.0 + lambda * obj.mu()) / (&c1 - &c2).norm());
    }
    Ok((worst <= 1.0 + 1e-9, format!("max ‖Δprox‖(1+λμ)/‖Δc‖ = {worst:.6}")))
}

fn error_bound() -> Outcome {
    let obj = RidgeLogistic::synthetic(200, 5, 0.1, 1)?;
    let lambda = 20.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let c = gaussian(&mut rng, 5, 3.0);
        let exact = solve_prox(&obj, lambda, &c, &c, &InnerConfig::with_tol(1e-13))?.x;
        let loose = InnerConfig { max_iters: 1, ..InnerConfig::with_tol(1e-13) };
        let rough = solve_prox(&obj, lambda, &c, &c, &loose)?;
        if let Some(bound) = rough.error_bound.filter(|b| *b > 1e-10) {
            worst = worst.max((&rough.x - &exact).norm() / bound);
        }
    }
    Ok((worst <= 1.0 + 1e-6, format!("max error/bound = {worst:.4}")))
}

fn ensemble_checks() -> ironfi::Result<(Check, Check)> {
    let quad = presets::quadratic(0)?;
    let (alpha, rho) = (10.0, presets::QUAD_RHO);
    let noise = NoiseModel::isotropic(rho, 11);
    let inner = InnerConfig { closed_form: true, ..InnerConfig::default() };
    let cfg = EnsembleConfig {
        n_particles: 2000,
        n_steps: 200,
        burn_in_fraction: 0.5,
        alpha_grid: vec![alpha],
        seeds: vec![0],
        init: Init::GaussianBall { center: Vector::zeros(3), radius: 0.5 },
    };
    let problem = Problem {
        obj: &quad,
        x_star: Some(quad.minimizer()),
        dynamics: Dynamics::new(presets::QUAD_MU, GammaMode::Fixed),
        gamma0: presets::QUAD_GAMMA,
        noise: &noise,
        inner: &inner,
    };
    let stats = run_ensemble(&cfg, &problem, alpha)?;
    let defect = stats.max_decomposition_defect();
    let decomposition = Check {
        name: "bias-variance identity",
        passed: defect <= 1e-12,
        detail: format!("max relative defect {defect:.2e}"),
    };
    let exact = stationary_mse_exact(&quad, alpha, presets::QUAD_GAMMA, presets::QUAD_MU, rho)?;
    let (mc, se) = (stats.stationary_mse.unwrap_or(f64::NAN), stats.stationary_se.unwrap_or(f64::NAN));
    let z = (mc - exact).abs() / se;
    let monte_carlo = Check {
        name: "Monte Carlo vs exact MSE",
        passed: z < 4.0,
        detail: format!("MC {mc:.4e} ± {se:.1e}, exact {exact:.4e}, |z| = {z:.2}"),
    };
    Ok((decomposition, monte_carlo))
}

fn check(name: &'static str, outcome: Outcome) -> Check {
    match outcome {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: format!("error: {e}") },
    }
}

pub fn run_checks() -> Vec<Check> {
    let mut checks = vec![
        check("hand-evaluated step", hand_step()),
        check("recursion vs simulator", recursion_vs_simulator()),
        check("Lyapunov solve", lyapunov()),
        check("resolvent contraction", contraction()),
        check("residual-to-error bound", error_bound()),
    ];
    match ensemble_checks() {
        Ok((a, b)) => checks.extend([a, b]),
        Err(e) => checks.push(Check { name: "ensemble checks", passed: false, detail: format!("error: {e}") }),
    }
    checks
}

/// Prints one line per check; true when all pass.
pub fn selftest() -> bool {
    let start = Instant::now();
    let checks = run_checks();
    for c in &checks {
        println!("{:<26} {}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed in {:.1?}", checks.len() - failed, checks.len(), start.elapsed());
    failed == 0
}
