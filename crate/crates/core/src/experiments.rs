//! Monte Carlo ensembles of IRON_FI particles and the statistics built on
//! them: per-iteration MSE with its bias–variance split, stationary window
//! averages, log–log slope fits, reference minimizers, tolerance sweeps and
//! projected particle clouds.
//!
//! Particles advance in lockstep so that per-iteration statistics can be
//! taken across the ensemble. Each particle draws from its own counter-based
//! stream, and every reduction is an ordered pairwise sum, so results do not
//! depend on the number of threads.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::inner::InnerConfig;
use crate::iron::{outer_step, Dynamics, IronState, NoiseModel};
use crate::linalg::{pairwise_sum, spd_solve, Vector};
use crate::objectives::Objective;

/// Minimum number of post-burn-in samples an ensemble run must keep.
pub const MIN_STATIONARY_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Every particle starts at `(x0, v0)`.
    Point { x0: Vector, v0: Vector },
    /// `x = center + radius · η`, `η ~ N(0, I)`, at rest (`v = x`).
    GaussianBall { center: Vector, radius: f64 },
}

impl Init {
    pub fn dim(&self) -> usize {
        match self {
            Init::Point { x0, .. } => x0.len(),
            Init::GaussianBall { center, .. } => center.len(),
        }
    }

    fn state(&self, particle: u64, noise: &NoiseModel, gamma0: f64) -> Result<IronState> {
        match self {
            Init::Point { x0, v0 } => IronState::new(x0.clone(), v0.clone(), gamma0),
            Init::GaussianBall { center, radius } => {
                let mut rng = noise.init_stream(particle);
                let x = Vector::from_fn(center.len(), |i, _| {
                    center[i] + radius * rng.sample::<f64, _>(StandardNormal)
                });
                IronState::at_rest(x, gamma0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub n_particles: usize,
    pub n_steps: usize,
    pub burn_in_fraction: f64,
    pub alpha_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub init: Init,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::Config("n_particles must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::Config(format!(
                "burn_in_fraction must lie in [0, 1), got {}",
                self.burn_in_fraction
            )));
        }
        let kept = self.series_len() - self.window_start();
        if kept < MIN_STATIONARY_SAMPLES {
            return Err(Error::Config(format!(
                "burn-in leaves {kept} stationary samples, need at least {MIN_STATIONARY_SAMPLES}"
            )));
        }
        if self.alpha_grid.is_empty() {
            return Err(Error::Config("alpha grid is empty".into()));
        }
        if self.alpha_grid.iter().any(|a| !(*a >= 1.0) || !a.is_finite()) {
            return Err(Error::Config("alpha grid entries must be finite and ≥ 1".into()));
        }
        if self.alpha_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("alpha grid must be strictly ascending".into()));
        }
        if let Init::Point { x0, v0 } = &self.init {
            check_dim("v0", v0.len(), x0.len())?;
        }
        Ok(())
    }

    /// Length of a per-iteration series, `k = 0..=n_steps`.
    pub fn series_len(&self) -> usize {
        self.n_steps + 1
    }

    /// First iteration index inside the stationary window.
    pub fn window_start(&self) -> usize {
        window_start(self.series_len(), self.burn_in_fraction)
    }
}

fn window_start(len: usize, burn_in_fraction: f64) -> usize {
    ((len as f64) * burn_in_fraction).floor() as usize
}

/// What is being simulated, independent of `α` and of the ensemble size.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub obj: &'a dyn Objective,
    /// Known minimizer; `None` for objectives where only cloud statistics
    /// make sense.
    pub x_star: Option<&'a Vector>,
    pub dynamics: Dynamics,
    pub gamma0: f64,
    pub noise: &'a NoiseModel,
    pub inner: &'a InnerConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterStats {
    pub k: usize,
    pub mse: Option<f64>,
    pub bias_sq: Option<f64>,
    pub cov_trace: f64,
    /// Per-coordinate empirical variance (`1/N` normalization).
    pub coord_var: Vec<f64>,
    /// Mean Newton steps of the step that produced iteration `k`
    /// (`0` at `k = 0`).
    pub mean_inner_iters: f64,
}

impl IterStats {
    /// `mse − bias_sq − cov_trace`, relative to `mse`.
    pub fn decomposition_defect(&self) -> Option<f64> {
        let (mse, bias) = (self.mse?, self.bias_sq?);
        let d = mse - bias - self.cov_trace;
        Some(if mse > 0.0 { d.abs() / mse } else { d.abs() })
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub alpha: f64,
    pub series: Vec<IterStats>,
    pub stationary_mse: Option<f64>,
    /// Standard error of `stationary_mse` across particles.
    pub stationary_se: Option<f64>,
    /// `α · stationary_mse`.
    pub scaled_mse: Option<f64>,
    /// Mean Newton steps per outer step over the stationary window.
    pub stationary_inner_iters: f64,
    /// Outer steps whose inner solve missed its residual target.
    pub failed_steps: usize,
    pub initial_positions: Vec<Vector>,
    pub final_positions: Vec<Vector>,
}

impl EnsembleStats {
    pub fn mse_series(&self) -> Option<Vec<f64>> {
        self.series.iter().map(|s| s.mse).collect()
    }

    pub fn max_decomposition_defect(&self) -> f64 {
        self.series
            .iter()
            .filter_map(IterStats::decomposition_defect)
            .fold(0.0, f64::max)
    }
}

struct Particle {
    state: IronState,
    window_sq_err: f64,
}

/// Runs `cfg.n_particles` particles for `cfg.n_steps` steps at constant `α`.
///
/// Failed inner solves do not abort the run; the particle continues from the
/// best inner iterate and the step is counted in `failed_steps`.
pub fn run_ensemble(cfg: &EnsembleConfig, problem: &Problem<'_>, alpha: f64) -> Result<EnsembleStats> {
    cfg.validate()?;
    let n = problem.obj.dim();
    check_dim("init", cfg.init.dim(), n)?;
    problem.noise.validate(n)?;
    problem.inner.validate()?;
    if let Some(xs) = problem.x_star {
        check_dim("x_star", xs.len(), n)?;
    }
    if !(alpha >= 1.0) {
        return Err(Error::Config(format!("alpha must be ≥ 1, got {alpha}")));
    }

    let start = cfg.window_start();
    let mut particles = (0..cfg.n_particles as u64)
        .into_par_iter()
        .map(|j| {
            let state = cfg.init.state(j, problem.noise, problem.gamma0)?;
            Ok(Particle { state, window_sq_err: 0.0 })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut series = Vec::with_capacity(cfg.series_len());
    let initial_positions: Vec<Vector> = particles.iter().map(|p| p.state.x.clone()).collect();
    let sq_errs = squared_errors(&particles, problem.x_star);
    accumulate_window(&mut particles, &sq_errs, 0, start);
    series.push(iter_stats(0, &particles, problem.x_star, &sq_errs, 0.0));

    let mut failed_steps = 0;
    for k in 0..cfg.n_steps {
        let outcomes = particles
            .par_iter_mut()
            .enumerate()
            .map(|(j, p)| {
                let mut rng = problem.noise.stream(j as u64, k as u64);
                let step = outer_step(
                    &p.state,
                    problem.obj,
                    alpha,
                    &problem.dynamics,
                    problem.noise,
                    problem.inner,
                    &mut rng,
                );
                match step {
                    Ok((next, report)) => {
                        p.state = next;
                        Ok((report.inner_iters, false))
                    }
                    Err(Error::StepFailed(f)) => {
                        let iters = f.report.inner_iters;
                        p.state = f.state;
                        Ok((iters, true))
                    }
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        failed_steps += outcomes.iter().filter(|o| o.1).count();
        let iters: Vec<f64> = outcomes.iter().map(|o| o.0 as f64).collect();
        let mean_iters = pairwise_sum(&iters) / cfg.n_particles as f64;

        let sq_errs = squared_errors(&particles, problem.x_star);
        accumulate_window(&mut particles, &sq_errs, k + 1, start);
        series.push(iter_stats(k + 1, &particles, problem.x_star, &sq_errs, mean_iters));
    }

    let window_len = (cfg.series_len() - start) as f64;
    let (stationary_mse, stationary_se) = match problem.x_star {
        Some(_) => {
            let mse: Vec<f64> = series.iter().map(|s| s.mse.unwrap_or(0.0)).collect();
            let mean = stationary_average(&mse, cfg.burn_in_fraction)?;
            let per_particle: Vec<f64> =
                particles.iter().map(|p| p.window_sq_err / window_len).collect();
            (Some(mean), standard_error(&per_particle))
        }
        None => (None, None),
    };
    // inner iterations are only defined from k = 1 on
    let iter_window: Vec<f64> =
        series[start.max(1)..].iter().map(|s| s.mean_inner_iters).collect();
    let stationary_inner_iters =
        if iter_window.is_empty() { 0.0 } else { pairwise_sum(&iter_window) / iter_window.len() as f64 };

    Ok(EnsembleStats {
        alpha,
        scaled_mse: stationary_mse.map(|m| alpha * m),
        stationary_mse,
        stationary_se,
        stationary_inner_iters,
        failed_steps,
        series,
        initial_positions,
        final_positions: particles.into_iter().map(|p| p.state.x).collect(),
    })
}

fn squared_errors(particles: &[Particle], x_star: Option<&Vector>) -> Vec<f64> {
    match x_star {
        Some(xs) => particles.iter().map(|p| (&p.state.x - xs).norm_squared()).collect(),
        None => Vec::new(),
    }
}

fn accumulate_window(particles: &mut [Particle], sq_errs: &[f64], k: usize, start: usize) {
    if k >= start {
        for (p, e) in particles.iter_mut().zip(sq_errs) {
            p.window_sq_err += e;
        }
    }
}

fn iter_stats(
    k: usize,
    particles: &[Particle],
    x_star: Option<&Vector>,
    sq_errs: &[f64],
    mean_inner_iters: f64,
) -> IterStats {
    let (moments, mse, bias_sq) = match x_star {
        // moments of the errors x − x*, so that the identity survives near x*
        Some(xs) => {
            let errors: Vec<Vector> = particles.iter().map(|p| &p.state.x - xs).collect();
            let moments = moments(&errors.iter().collect::<Vec<_>>());
            let bias_sq = moments.mean.norm_squared();
            (moments, Some(pairwise_sum(sq_errs) / particles.len() as f64), Some(bias_sq))
        }
        None => (moments(&particles.iter().map(|p| &p.state.x).collect::<Vec<_>>()), None, None),
    };
    IterStats {
        k,
        mse,
        bias_sq,
        cov_trace: moments.cov_trace,
        coord_var: moments.coord_var,
        mean_inner_iters,
    }
}

struct Moments {
    mean: Vector,
    coord_var: Vec<f64>,
    cov_trace: f64,
}

fn moments(points: &[&Vector]) -> Moments {
    let n_pts = points.len() as f64;
    let dim = points.first().map_or(0, |p| p.len());
    let mut column = vec![0.0; points.len()];
    let mut mean = Vector::zeros(dim);
    let mut coord_var = vec![0.0; dim];
    for i in 0..dim {
        for (c, p) in column.iter_mut().zip(points) {
            *c = p[i];
        }
        mean[i] = pairwise_sum(&column) / n_pts;
        for c in column.iter_mut() {
            *c = (*c - mean[i]) * (*c - mean[i]);
        }
        coord_var[i] = pairwise_sum(&column) / n_pts;
    }
    // tr(Cov) = (1/N) Σ ‖x_j − x̄‖², summed per particle so it pairs with MSE
    let per_point: Vec<f64> = points.iter().map(|p| (*p - &mean).norm_squared()).collect();
    let cov_trace = pairwise_sum(&per_point) / n_pts;
    Moments { mean, coord_var, cov_trace }
}

fn standard_error(samples: &[f64]) -> Option<f64> {
    let n = samples.len();
    if n < 2 {
        return None;
    }
    let mean = pairwise_sum(samples) / n as f64;
    let dev: Vec<f64> = samples.iter().map(|s| (s - mean) * (s - mean)).collect();
    let var = pairwise_sum(&dev) / (n as f64 - 1.0);
    Some((var / n as f64).sqrt())
}

/// Mean of `series` after dropping the first `⌊len · burn_in_fraction⌋`
/// entries.
pub fn stationary_average(series: &[f64], burn_in_fraction: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(Error::Config(format!(
            "burn_in_fraction must lie in [0, 1), got {burn_in_fraction}"
        )));
    }
    let start = window_start(series.len(), burn_in_fraction);
    let window = &series[start.min(series.len())..];
    if window.is_empty() {
        return Err(Error::Config("series too short for a stationary window".into()));
    }
    Ok(pairwise_sum(window) / window.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    /// Mean of the per-seed slopes (the pooled slope when no seeds are
    /// given).
    pub slope: f64,
    pub intercept: f64,
    /// Least-squares slope of `log(mse)` against `log(α)` for the given
    /// aggregate curve.
    pub pooled_slope: f64,
    pub pooled_intercept: f64,
    pub per_seed_slopes: Vec<f64>,
    /// `mean ± 1.96 · sd / √n_seeds`.
    pub ci95: (f64, f64),
    pub alpha_range: (f64, f64),
}

fn log_log_fit(alphas: &[f64], mses: &[f64]) -> (f64, f64) {
    let xs: Vec<f64> = alphas.iter().map(|a| a.ln()).collect();
    let ys: Vec<f64> = mses.iter().map(|m| m.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fits `log(mse) = slope · log(α) + intercept`, per seed and for the
/// aggregate curve.
pub fn slope_fit(alphas: &[f64], mses: &[f64], per_seed_mses: &[Vec<f64>]) -> Result<SlopeFit> {
    if alphas.len() < 3 {
        return Err(Error::InvalidData(format!(
            "slope fit needs at least 3 grid points, got {}",
            alphas.len()
        )));
    }
    check_dim("mses", mses.len(), alphas.len())?;
    if alphas.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidData("alphas must be positive".into()));
    }
    let all_positive = |m: &[f64]| m.iter().all(|v| *v > 0.0 && v.is_finite());
    if !all_positive(mses) || !per_seed_mses.iter().all(|m| all_positive(m)) {
        return Err(Error::InvalidData("MSE values must be positive and finite".into()));
    }
    if alphas.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidData("alphas must be distinct".into()));
    }
    let (pooled_slope, pooled_intercept) = log_log_fit(alphas, mses);
    let mut per_seed_slopes = Vec::with_capacity(per_seed_mses.len());
    let mut per_seed_intercepts = Vec::with_capacity(per_seed_mses.len());
    for m in per_seed_mses {
        check_dim("per-seed mses", m.len(), alphas.len())?;
        let (s, i) = log_log_fit(alphas, m);
        per_seed_slopes.push(s);
        per_seed_intercepts.push(i);
    }
    let (slope, intercept, ci95) = if per_seed_slopes.is_empty() {
        (pooled_slope, pooled_intercept, (pooled_slope, pooled_slope))
    } else {
        let k = per_seed_slopes.len() as f64;
        let mean = per_seed_slopes.iter().sum::<f64>() / k;
        let icpt = per_seed_intercepts.iter().sum::<f64>() / k;
        let half = if per_seed_slopes.len() > 1 {
            let var = per_seed_slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0);
            1.96 * (var / k).sqrt()
        } else {
            0.0
        };
        (mean, icpt, (mean - half, mean + half))
    };
    let lo = alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = alphas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SlopeFit {
        slope,
        intercept,
        pooled_slope,
        pooled_intercept,
        per_seed_slopes,
        ci95,
        alpha_range: (lo, hi),
    })
}

/// Grid points used for slope fits: `α ≥ alpha_min`, or by default the
/// upper half of the grid in log-space.
pub fn large_alpha_range(alpha_grid: &[f64], alpha_min: Option<f64>) -> Vec<f64> {
    let (Some(&lo), Some(&hi)) = (alpha_grid.first(), alpha_grid.last()) else {
        return Vec::new();
    };
    let cut = alpha_min.unwrap_or_else(|| (lo * hi).sqrt());
    alpha_grid.iter().copied().filter(|&a| a >= cut).collect()
}

const REFERENCE_MAX_NEWTON: usize = 100;

/// Full-batch damped Newton on `∇f` from the origin until `‖∇f‖ ≤ tol`.
pub fn reference_minimizer(obj: &dyn Objective, tol: f64) -> Result<Vector> {
    let n = obj.dim();
    let mut w = Vector::zeros(n);
    let mut f = obj.value(&w)?;
    let mut grad = obj.gradient(&w)?;
    for _ in 0..REFERENCE_MAX_NEWTON {
        if grad.norm() <= tol {
            return Ok(w);
        }
        let h = obj.hessian(&w)?;
        let step = spd_solve(&h, &(-&grad))
            .ok_or_else(|| Error::Degenerate("Hessian is not positive definite".into()))?;
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let trial = &w + &step * t;
            let ft = obj.value(&trial)?;
            if ft <= f + 1e-4 * t * slope {
                next = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        match next {
            Some((trial, ft)) => {
                w = trial;
                f = ft;
            }
            // at the roundoff floor the value cannot decrease; take the full step
            None => {
                w += &step;
                f = obj.value(&w)?;
            }
        }
        grad = obj.gradient(&w)?;
    }
    if grad.norm() <= tol {
        return Ok(w);
    }
    Err(Error::NoConvergence(format!(
        "Newton did not reach ‖∇f‖ ≤ {tol:e} in {REFERENCE_MAX_NEWTON} steps (‖∇f‖ = {:e})",
        grad.norm()
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub delta: f64,
    pub seed: u64,
    pub stationary_mse: f64,
    pub mean_inner_iters: f64,
    pub failed_steps: usize,
    /// Largest relative `mse − bias_sq − cov_trace` over the run.
    pub max_decomposition_defect: f64,
}

/// Stationary MSE and inner cost over the full `(α, δ, seed)` cross product.
///
/// Run `seed` uses master seed `problem.noise.seed + seed`; `δ` replaces
/// `problem.inner.residual_tol`. Rows come out ordered by `α`, then `δ`, then
/// seed.
pub fn tolerance_sweep(
    cfg: &EnsembleConfig,
    problem: &Problem<'_>,
    alpha_grid: &[f64],
    delta_grid: &[f64],
) -> Result<Vec<SweepRow>> {
    if alpha_grid.is_empty() || delta_grid.is_empty() {
        return Err(Error::Config("tolerance sweep needs nonempty α and δ grids".into()));
    }
    if cfg.seeds.is_empty() {
        return Err(Error::Config("tolerance sweep needs at least one seed".into()));
    }
    let x_star = problem
        .x_star
        .ok_or_else(|| Error::Config("tolerance sweep needs a reference minimizer".into()))?;
    let mut jobs = Vec::new();
    for &alpha in alpha_grid {
        for &delta in delta_grid {
            for &seed in &cfg.seeds {
                jobs.push((alpha, delta, seed));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(alpha, delta, seed)| {
            let noise = NoiseModel { kind: problem.noise.kind.clone(), seed: problem.noise.seed.wrapping_add(seed) };
            let inner = InnerConfig { residual_tol: delta, ..problem.inner.clone() };
            let run = Problem { noise: &noise, inner: &inner, x_star: Some(x_star), ..*problem };
            let stats = run_ensemble(cfg, &run, alpha)?;
            Ok(SweepRow {
                alpha,
                delta,
                seed,
                stationary_mse: stats.stationary_mse.expect("x_star given"),
                mean_inner_iters: stats.stationary_inner_iters,
                failed_steps: stats.failed_steps,
                max_decomposition_defect: stats.max_decomposition_defect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceCheck {
    pub alpha: f64,
    pub delta: f64,
    pub mean_mse: f64,
    /// Standard error across seeds.
    pub se: f64,
    pub reference_mse: f64,
    pub reference_se: f64,
    /// `|mean_mse − reference_mse| / reference_mse`.
    pub rel_departure: f64,
    /// The difference exceeds three combined standard errors.
    pub departed: bool,
}

/// Compares each `(α, δ)` cell's seed-mean stationary MSE with the cell of
/// `reference_delta` at the same `α`.
pub fn flag_departures(rows: &[SweepRow], reference_delta: f64) -> Result<Vec<ToleranceCheck>> {
    let cell = |alpha: f64, delta: f64| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.alpha == alpha && r.delta == delta)
            .map(|r| r.stationary_mse)
            .collect()
    };
    let mean_se = |xs: &[f64]| -> (f64, f64) {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        (mean, standard_error(xs).unwrap_or(0.0))
    };
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.alpha, r.delta)) {
            keys.push((r.alpha, r.delta));
        }
    }
    keys.into_iter()
        .map(|(alpha, delta)| {
            let reference = cell(alpha, reference_delta);
            if reference.is_empty() {
                return Err(Error::InvalidData(format!(
                    "no reference rows for α = {alpha}, δ = {reference_delta}"
                )));
            }
            let (reference_mse, reference_se) = mean_se(&reference);
            let (mean_mse, se) = mean_se(&cell(alpha, delta));
            let combined = (se * se + reference_se * reference_se).sqrt();
            let diff = (mean_mse - reference_mse).abs();
            Ok(ToleranceCheck {
                alpha,
                delta,
                mean_mse,
                se,
                reference_mse,
                reference_se,
                rel_departure: diff / reference_mse,
                departed: diff > 3.0 * combined,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneCloud {
    pub axes: (usize, usize),
    pub points: Vec<(f64, f64)>,
    /// Trace of the empirical 2×2 covariance of the projected points.
    pub cov_trace: f64,
}

/// Projects an ensemble onto coordinate planes.
pub fn cloud_snapshot(points: &[Vector], pairs: &[(usize, usize)]) -> Result<Vec<PlaneCloud>> {
    if points.len() < 2 {
        return Err(Error::InvalidInput("a cloud needs at least 2 particles".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidInput("particles have differing dimensions".into()));
    }
    let refs: Vec<&Vector> = points.iter().collect();
    let m = moments(&refs);
    pairs
        .iter()
        .map(|&(i, j)| {
            if i >= dim || j >= dim {
                return Err(Error::InvalidInput(format!("plane ({i}, {j}) outside dimension {dim}")));
            }
            Ok(PlaneCloud {
                axes: (i, j),
                points: points.iter().map(|p| (p[i], p[j])).collect(),
                cov_trace: m.coord_var[i] + m.coord_var[j],
            })
        })
        .collect()
}

/// The three coordinate planes of a 3-D problem, or all pairs in general.
pub fn coordinate_planes(dim: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..dim {
        for j in (i + 1)..dim {
            out.push((i, j));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iron::GammaMode;
    use crate::linalg::Matrix;
    use crate::objectives::Quadratic;
    use approx::assert_relative_eq;

    fn diag_quad() -> Quadratic {
        Quadratic::new(Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 1.0, 3.0])), Vector::from_element(3, 1.0))
            .unwrap()
    }

    fn cfg(n_particles: usize, init: Init) -> EnsembleConfig {
        EnsembleConfig {
            n_particles,
            n_steps: 40,
            burn_in_fraction: 0.5,
            alpha_grid: vec![10.0],
            seeds: vec![0],
            init,
        }
    }

    #[test]
    fn stationary_average_examples() {
        assert_eq!(stationary_average(&[2.5; 20], 0.5).unwrap(), 2.5);
        let ramp: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(stationary_average(&ramp, 0.5).unwrap(), 8.0);
        let decay: Vec<f64> = (0..30).map(|k| 10.0 - 0.3 * k as f64).collect();
        let m = stationary_average(&decay, 0.3).unwrap();
        assert!(m > decay[29] && m < decay[9]);
        assert!(stationary_average(&[], 0.5).is_err());
        assert!(stationary_average(&[1.0], 1.0).is_err());
    }

    #[test]
    fn slope_fit_examples() {
        let alphas = [10.0, 30.0, 100.0, 300.0];
        let c_over: Vec<f64> = alphas.iter().map(|a| 7.0 / a).collect();
        let fit = slope_fit(&alphas, &c_over, &[]).unwrap();
        assert_relative_eq!(fit.slope, -1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 7f64.ln(), epsilon = 1e-12);
        let flat = slope_fit(&alphas, &[3.0; 4], &[]).unwrap();
        assert_relative_eq!(flat.slope, 0.0, epsilon = 1e-12);
        assert_eq!(fit.alpha_range, (10.0, 300.0));
    }

    #[test]
    fn slope_fit_aggregates_seeds() {
        let alphas = [10.0, 100.0, 1000.0];
        let seeds: Vec<Vec<f64>> = [0.9f64, 1.0, 1.1]
            .iter()
            .map(|p| alphas.iter().map(|a: &f64| a.powf(-p)).collect())
            .collect();
        let fit = slope_fit(&alphas, &seeds[1], &seeds).unwrap();
        assert_relative_eq!(fit.slope, -1.0, epsilon = 1e-12);
        assert!(fit.ci95.0 < fit.slope && fit.slope < fit.ci95.1);
        // sd = 0.1 over three seeds
        assert_relative_eq!(fit.ci95.1 - fit.slope, 1.96 * 0.1 / 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn slope_fit_preconditions() {
        assert!(matches!(slope_fit(&[1.0, 2.0], &[1.0, 1.0], &[]), Err(Error::InvalidData(_))));
        assert!(matches!(slope_fit(&[1.0, 2.0, 3.0], &[1.0, 0.0, 1.0], &[]), Err(Error::InvalidData(_))));
    }

    #[test]
    fn large_alpha_range_defaults_to_upper_log_half() {
        let grid = [1.0, 10.0, 100.0, 1000.0, 10000.0];
        assert_eq!(large_alpha_range(&grid, None), vec![100.0, 1000.0, 10000.0]);
        assert_eq!(large_alpha_range(&grid, Some(1000.0)), vec![1000.0, 10000.0]);
    }

    #[test]
    fn noiseless_start_at_minimizer_has_zero_mse() {
        let q = diag_quad();
        let xs = q.minimizer().clone();
        let noise = NoiseModel::isotropic(0.0, 3);
        let inner = InnerConfig::default();
        let problem = Problem {
            obj: &q,
            x_star: Some(&xs),
            dynamics: Dynamics::new(1.0, GammaMode::Fixed),
            gamma0: 1.0,
            noise: &noise,
            inner: &inner,
        };
        let stats = run_ensemble(&cfg(8, Init::Point { x0: xs.clone(), v0: xs.clone() }), &problem, 10.0).unwrap();
        assert!(stats.series.iter().all(|s| s.mse.unwrap() < 1e-28));
        assert!(stats.stationary_mse.unwrap() < 1e-28);
    }

    #[test]
    fn single_particle_has_no_spread() {
        let q = diag_quad();
        let xs = q.minimizer().clone();
        let noise = NoiseModel::isotropic(0.5, 3);
        let inner = InnerConfig::default();
        let problem = Problem {
            obj: &q,
            x_star: Some(&xs),
            dynamics: Dynamics::new(1.0, GammaMode::Fixed),
            gamma0: 1.0,
            noise: &noise,
            inner: &inner,
        };
        let init = Init::GaussianBall { center: Vector::zeros(3), radius: 1.0 };
        let stats = run_ensemble(&cfg(1, init), &problem, 10.0).unwrap();
        for s in &stats.series {
            assert_eq!(s.cov_trace, 0.0);
            assert_eq!(s.mse, s.bias_sq);
        }
        assert!(stats.stationary_se.is_none());
    }

    #[test]
    fn config_validation() {
        let init = Init::GaussianBall { center: Vector::zeros(3), radius: 1.0 };
        let mut c = cfg(4, init);
        assert!(c.validate().is_ok());
        c.alpha_grid.clear();
        assert!(c.validate().is_err());
        c.alpha_grid = vec![10.0];
        c.n_steps = 15;
        // 16 samples, half burned: 8 < 10
        assert!(c.validate().is_err());
        c.n_steps = 40;
        c.burn_in_fraction = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn cloud_snapshot_of_identical_particles_is_flat() {
        let pts = vec![Vector::from_vec(vec![1.0, 2.0, 3.0]); 5];
        let planes = cloud_snapshot(&pts, &coordinate_planes(3)).unwrap();
        assert_eq!(planes.len(), 3);
        assert!(planes.iter().all(|p| p.cov_trace == 0.0 && p.points.len() == 5));
        assert!(cloud_snapshot(&pts[..1], &[(0, 1)]).is_err());
        assert!(cloud_snapshot(&pts, &[(0, 3)]).is_err());
    }

    #[test]
    fn cloud_trace_matches_hand_variance() {
        let pts = vec![Vector::from_vec(vec![0.0, 0.0]), Vector::from_vec(vec![2.0, 4.0])];
        let planes = cloud_snapshot(&pts, &[(0, 1)]).unwrap();
        // variances 1 and 4 with 1/N normalization
        assert_eq!(planes[0].cov_trace, 5.0);
    }

    #[test]
    fn reference_minimizer_on_quadratic_is_exact() {
        let a = Matrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let q = Quadratic::new(a, Vector::from_vec(vec![1.0, -1.0])).unwrap();
        let w = reference_minimizer(&q, 1e-12).unwrap();
        assert!((&w - q.minimizer()).norm() < 1e-12);
    }

    #[test]
    fn flag_departures_detects_shifted_cell() {
        let mk = |delta: f64, seed: u64, m: f64| SweepRow {
            alpha: 10.0,
            delta,
            seed,
            stationary_mse: m,
            mean_inner_iters: 2.0,
            failed_steps: 0,
            max_decomposition_defect: 0.0,
        };
        let rows = vec![
            mk(1e-10, 0, 1.0),
            mk(1e-10, 1, 1.1),
            mk(1e-10, 2, 0.9),
            mk(1e-6, 0, 1.0),
            mk(1e-6, 1, 1.1),
            mk(1e-6, 2, 0.9),
            mk(1e3, 0, 9.0),
            mk(1e3, 1, 9.1),
            mk(1e3, 2, 8.9),
        ];
        let checks = flag_departures(&rows, 1e-10).unwrap();
        assert_eq!(checks.len(), 3);
        assert!(!checks[0].departed && !checks[1].departed);
        assert!(checks[2].departed);
        assert_relative_eq!(checks[2].rel_departure, 8.0, epsilon = 1e-12);
    }
}
