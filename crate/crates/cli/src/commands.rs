//! One function per subcommand. Each returns the artifacts it wrote.

use std::path::{Path, PathBuf};

use ironfi::experiments::{
    cloud_snapshot, coordinate_planes, flag_departures, large_alpha_range, reference_minimizer,
    run_ensemble, slope_fit, tolerance_sweep, EnsembleStats, Problem, SweepRow,
};
use ironfi::iron::NoiseKind;
use ironfi::linalg::Vector;
use ironfi::objectives::Quadratic;
use ironfi::quad_exact::{asymptotic_constant, stability_threshold, stationary_mse_exact_with};
use ironfi::{Error, Objective};

use crate::artifacts::{num, opt, CsvArtifact};
use crate::config::{BuiltObjective, ExperimentConfig, LogisticKey};
use crate::error::{CliError, Result};

/// Tolerance for the per-iteration bias–variance identity.
pub const DECOMPOSITION_TOL: f64 = 1e-12;

fn require_quadratic(built: BuiltObjective, command: &str) -> Result<Quadratic> {
    match built {
        BuiltObjective::Quadratic(q) => Ok(q),
        _ => Err(CliError::Config(format!("{command} needs objective.kind = \"quadratic\""))),
    }
}

fn check_decomposition(all: &[EnsembleStats]) -> Result<()> {
    for s in all {
        let defect = s.max_decomposition_defect();
        if defect > DECOMPOSITION_TOL {
            return Err(CliError::Invariant(format!(
                "mse − bias_sq − cov_trace = {defect:e} (relative) at α = {}",
                s.alpha
            )));
        }
    }
    Ok(())
}

fn coord_header(prefix: &[&str], dim: usize) -> Vec<String> {
    let mut h: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    h.extend((1..=dim).map(|i| format!("x{i}")));
    h
}

fn write_clouds(out: &Path, runs: &[EnsembleStats], n_steps: usize, cap: usize) -> Result<PathBuf> {
    let dim = runs.first().and_then(|r| r.final_positions.first()).map_or(0, |p| p.len());
    let mut csv = CsvArtifact::create(out, "clouds.csv", &coord_header(&["alpha", "step", "particle"], dim))?;
    for run in runs {
        for (step, points) in [(0, &run.initial_positions), (n_steps, &run.final_positions)] {
            for (j, p) in points.iter().take(cap).enumerate() {
                let mut row = vec![num(run.alpha), step.to_string(), j.to_string()];
                row.extend(p.iter().map(|&x| num(x)));
                csv.row(&row)?;
            }
        }
    }
    csv.finish()
}

fn failure_warning(s: &EnsembleStats) -> Option<String> {
    (s.failed_steps > 0).then(|| format!("{} inner solves missed the residual tolerance", s.failed_steps))
}

fn exact_mse(cfg: &ExperimentConfig, quad: &Quadratic, kind: &NoiseKind, alpha: f64) -> (Option<f64>, Option<String>) {
    if cfg.dynamics.gamma_mode != crate::config::GammaModeSpec::Fixed {
        return (None, Some("exact curve undefined in updated-gamma mode".into()));
    }
    match stationary_mse_exact_with(quad, alpha, cfg.dynamics.gamma0, cfg.dynamics.mu, kind) {
        Ok(m) => (Some(m), None),
        Err(Error::Unstable { eigenvalue, spectral_radius, .. }) => (
            None,
            Some(format!("unstable: spectral radius {spectral_radius:.6} at eigenvalue {eigenvalue:.6}")),
        ),
        Err(Error::NonDecoupling(rel)) => {
            (None, Some(format!("noise covariance does not commute with A (relative {rel:.2e})")))
        }
        Err(e) => (None, Some(e.to_string())),
    }
}

fn max_radius(cfg: &ExperimentConfig, quad: &Quadratic, alpha: f64) -> Result<f64> {
    let table = stability_threshold(quad, cfg.dynamics.gamma0, cfg.dynamics.mu, 0.0, &[alpha])?;
    Ok(table.rows[0].max_radius)
}

fn quad_runs(cfg: &ExperimentConfig, quad: &Quadratic) -> Result<Vec<EnsembleStats>> {
    let ens = cfg.ensemble_config()?;
    let noise = cfg.noise_model()?;
    let inner = cfg.inner_config(cfg.inner.tol);
    let problem = Problem {
        obj: quad,
        x_star: Some(quad.minimizer()),
        dynamics: cfg.dynamics(),
        gamma0: cfg.dynamics.gamma0,
        noise: &noise,
        inner: &inner,
    };
    cfg.grids.alpha.iter().map(|&a| Ok(run_ensemble(&ens, &problem, a)?)).collect()
}

/// Per-iteration MSE decomposition and first/last particle clouds for every
/// `α` of the grid.
pub fn quad_sim(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let quad = require_quadratic(cfg.build_objective()?, "quad-sim")?;
    let kind = cfg.noise_model()?.kind;
    let runs = quad_runs(cfg, &quad)?;

    let mut written = Vec::new();
    let mut csv = CsvArtifact::with_header(
        out,
        "mse_decomposition.csv",
        &["alpha", "iter", "mse", "bias_sq", "cov_trace", "mean_inner_iters"],
    )?;
    for run in &runs {
        for s in &run.series {
            csv.row(&[
                num(run.alpha),
                s.k.to_string(),
                opt(s.mse),
                opt(s.bias_sq),
                num(s.cov_trace),
                num(s.mean_inner_iters),
            ])?;
        }
    }
    written.push(csv.finish()?);
    written.push(write_clouds(out, &runs, cfg.ensemble.n_steps, cfg.cloud_points)?);

    let mut csv = CsvArtifact::with_header(
        out,
        "summary.csv",
        &[
            "alpha",
            "stationary_mse",
            "stationary_se",
            "scaled_mse",
            "exact_stationary_mse",
            "spectral_radius_max",
            "failed_steps",
            "warnings",
        ],
    )?;
    for run in &runs {
        let (exact, warning) = exact_mse(cfg, &quad, &kind, run.alpha);
        let warnings: Vec<String> = warning.into_iter().chain(failure_warning(run)).collect();
        csv.row(&[
            num(run.alpha),
            opt(run.stationary_mse),
            opt(run.stationary_se),
            opt(run.scaled_mse),
            opt(exact),
            num(max_radius(cfg, &quad, run.alpha)?),
            run.failed_steps.to_string(),
            warnings.join("; "),
        ])?;
    }
    written.push(csv.finish()?);
    check_decomposition(&runs)?;
    Ok(written)
}

/// Monte Carlo `α·MSE_∞`, exact `α·tr(P_xx)` and `C_quad` per `α`.
pub fn quad_lyapunov(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    if cfg.dynamics.gamma_mode != crate::config::GammaModeSpec::Fixed {
        return Err(CliError::Refused(
            "the exact stationary covariance exists only for fixed gamma; set dynamics.gamma_mode = \"fixed\"".into(),
        ));
    }
    let rho = cfg
        .isotropic_rho()
        .ok_or_else(|| CliError::Refused("quad-lyapunov needs isotropic noise".into()))?;
    let quad = require_quadratic(cfg.build_objective()?, "quad-lyapunov")?;
    let kind = NoiseKind::Isotropic { rho };
    let c_quad = asymptotic_constant(&quad, cfg.dynamics.gamma0, rho);
    let runs = quad_runs(cfg, &quad)?;

    let mut csv = CsvArtifact::with_header(
        out,
        "scaled_mse.csv",
        &[
            "alpha",
            "mc_scaled_mse",
            "exact_scaled_mse",
            "c_quad",
            "spectral_radius_max",
            "mc_scaled_se",
            "warning",
        ],
    )?;
    for run in &runs {
        let a = run.alpha;
        let (exact, warning) = exact_mse(cfg, &quad, &kind, a);
        let warnings: Vec<String> = warning.into_iter().chain(failure_warning(run)).collect();
        csv.row(&[
            num(a),
            opt(run.scaled_mse),
            opt(exact.map(|m| a * m)),
            num(c_quad),
            num(max_radius(cfg, &quad, a)?),
            opt(run.stationary_se.map(|se| a * se)),
            warnings.join("; "),
        ])?;
    }
    let written = vec![csv.finish()?];
    check_decomposition(&runs)?;
    Ok(written)
}

const REFERENCE_FILE: &str = "reference_minimizer.csv";

fn reference_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> =
        ["n_samples", "dim", "lambda_reg", "data_seed", "grad_norm"].iter().map(|s| s.to_string()).collect();
    h.extend((0..dim).map(|i| format!("w{i}")));
    h
}

/// Loads the cached minimizer if it was computed for the same instance and
/// still satisfies the gradient tolerance.
fn load_reference(path: &Path, key: &LogisticKey, obj: &dyn Objective) -> Option<Vector> {
    let mut reader = csv::Reader::from_path(path).ok()?;
    if reader.headers().ok()?.iter().collect::<Vec<_>>() != reference_header(key.dim) {
        return None;
    }
    let record = reader.records().next()?.ok()?;
    let fields: Vec<f64> = record.iter().map(|f| f.parse::<f64>()).collect::<std::result::Result<_, _>>().ok()?;
    let matches = fields[0] == key.n_samples as f64
        && fields[1] == key.dim as f64
        && fields[2] == key.lambda_reg
        && record.get(3)?.parse::<u64>().ok()? == key.data_seed;
    if !matches {
        return None;
    }
    let w = Vector::from_row_slice(&fields[5..]);
    (obj.gradient(&w).ok()?.norm() <= key.reference_tol).then_some(w)
}

fn reference_for(out: &Path, key: &LogisticKey, obj: &dyn Objective) -> Result<(Vector, Option<PathBuf>)> {
    let path = out.join(REFERENCE_FILE);
    if let Some(w) = load_reference(&path, key, obj) {
        return Ok((w, None));
    }
    let w = reference_minimizer(obj, key.reference_tol).map_err(|e| match e {
        Error::NoConvergence(msg) => CliError::Core(Error::NoConvergence(format!(
            "reference minimizer: {msg}; the gradient may be at its roundoff floor, consider raising objective.reference_tol"
        ))),
        other => CliError::Core(other),
    })?;
    let mut csv = CsvArtifact::create(out, REFERENCE_FILE, &reference_header(key.dim))?;
    let mut row = vec![
        key.n_samples.to_string(),
        key.dim.to_string(),
        num(key.lambda_reg),
        key.data_seed.to_string(),
        num(obj.gradient(&w)?.norm()),
    ];
    row.extend(w.iter().map(|&x| num(x)));
    csv.row(&row)?;
    Ok((w, Some(csv.finish()?)))
}

/// Full `(α, δ, seed)` sweep on the logistic benchmark with slope fits and
/// tolerance flags.
pub fn logreg_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let (obj, key) = match cfg.build_objective()? {
        BuiltObjective::Logistic { obj, spec } => (obj, spec),
        _ => return Err(CliError::Config("logreg-sweep needs objective.kind = \"logistic\"".into())),
    };
    let mut written = Vec::new();
    let (w_star, cached) = reference_for(out, &key, &obj)?;
    written.extend(cached);

    let deltas = if cfg.grids.delta.is_empty() { vec![cfg.inner.tol] } else { cfg.grids.delta.clone() };
    let ens = cfg.ensemble_config()?;
    let noise = cfg.noise_model()?;
    let inner = cfg.inner_config(cfg.inner.tol);
    let problem = Problem {
        obj: &obj,
        x_star: Some(&w_star),
        dynamics: cfg.dynamics(),
        gamma0: cfg.dynamics.gamma0,
        noise: &noise,
        inner: &inner,
    };
    let rows = tolerance_sweep(&ens, &problem, &cfg.grids.alpha, &deltas)?;

    let mut csv = CsvArtifact::with_header(
        out,
        "stationary_mse.csv",
        &["alpha", "delta", "seed", "stationary_mse", "scaled_mse", "mean_inner_iters", "failed_steps"],
    )?;
    for r in &rows {
        csv.row(&[
            num(r.alpha),
            num(r.delta),
            r.seed.to_string(),
            num(r.stationary_mse),
            num(r.alpha * r.stationary_mse),
            num(r.mean_inner_iters),
            r.failed_steps.to_string(),
        ])?;
    }
    written.push(csv.finish()?);

    let reference_delta = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let mut csv = CsvArtifact::with_header(
        out,
        "tolerance_flags.csv",
        &["alpha", "delta", "mean_mse", "se", "reference_mse", "reference_se", "rel_departure", "departed"],
    )?;
    for c in flag_departures(&rows, reference_delta)? {
        csv.row(&[
            num(c.alpha),
            num(c.delta),
            num(c.mean_mse),
            num(c.se),
            num(c.reference_mse),
            num(c.reference_se),
            num(c.rel_departure),
            c.departed.to_string(),
        ])?;
    }
    written.push(csv.finish()?);

    if let Some(r) = rows.iter().find(|r| r.max_decomposition_defect > DECOMPOSITION_TOL) {
        return Err(CliError::Invariant(format!(
            "mse − bias_sq − cov_trace = {:e} (relative) at α = {}, δ = {}",
            r.max_decomposition_defect, r.alpha, r.delta
        )));
    }

    let fit_alphas = large_alpha_range(&cfg.grids.alpha, cfg.grids.alpha_min);
    if fit_alphas.len() < 3 {
        return Err(CliError::Refused(format!(
            "slope fit needs at least 3 grid points in the large-α range, found {}; stationary_mse.csv was written",
            fit_alphas.len()
        )));
    }
    let mut csv = CsvArtifact::with_header(
        out,
        "slope_fit.csv",
        &["delta", "slope", "ci_lo", "ci_hi", "pooled_slope", "intercept", "alpha_lo", "alpha_hi", "n_points"],
    )?;
    for &delta in &deltas {
        let (mean, per_seed) = seed_curves(&rows, delta, &fit_alphas, &ens.seeds);
        let fit = slope_fit(&fit_alphas, &mean, &per_seed)?;
        csv.row(&[
            num(delta),
            num(fit.slope),
            num(fit.ci95.0),
            num(fit.ci95.1),
            num(fit.pooled_slope),
            num(fit.intercept),
            num(fit.alpha_range.0),
            num(fit.alpha_range.1),
            fit_alphas.len().to_string(),
        ])?;
    }
    written.push(csv.finish()?);
    Ok(written)
}

/// Seed-mean curve and per-seed curves of stationary MSE over `alphas`.
fn seed_curves(rows: &[SweepRow], delta: f64, alphas: &[f64], seeds: &[u64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let per_seed: Vec<Vec<f64>> = seeds
        .iter()
        .map(|&seed| {
            alphas
                .iter()
                .map(|&a| {
                    rows.iter()
                        .find(|r| r.alpha == a && r.delta == delta && r.seed == seed)
                        .map_or(f64::NAN, |r| r.stationary_mse)
                })
                .collect()
        })
        .collect();
    let mean = (0..alphas.len())
        .map(|i| per_seed.iter().map(|m| m[i]).sum::<f64>() / per_seed.len() as f64)
        .collect();
    (mean, per_seed)
}

/// Late-time particle clouds and per-plane spread series on the log-cosh
/// objective.
pub fn logcosh_sim(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let obj = match cfg.build_objective()? {
        BuiltObjective::Logcosh(l) => l,
        _ => return Err(CliError::Config("logcosh-sim needs objective.kind = \"logcosh\"".into())),
    };
    let ens = cfg.ensemble_config()?;
    let noise = cfg.noise_model()?;
    let inner = cfg.inner_config(cfg.inner.tol);
    let problem = Problem {
        obj: &obj,
        x_star: None,
        dynamics: cfg.dynamics(),
        gamma0: cfg.dynamics.gamma0,
        noise: &noise,
        inner: &inner,
    };
    let runs: Vec<EnsembleStats> =
        cfg.grids.alpha.iter().map(|&a| run_ensemble(&ens, &problem, a)).collect::<ironfi::Result<_>>()?;
    let planes = coordinate_planes(obj.dim());

    let mut written = vec![write_clouds(out, &runs, cfg.ensemble.n_steps, cfg.cloud_points)?];
    let mut header: Vec<String> = vec!["alpha".into(), "step".into()];
    header.extend(planes.iter().map(|(i, j)| format!("plane_x{}_x{}", i + 1, j + 1)));
    header.push("cov_trace".into());
    let mut csv = CsvArtifact::create(out, "spread.csv", &header)?;
    for run in &runs {
        for s in &run.series {
            let mut row = vec![num(run.alpha), s.k.to_string()];
            row.extend(planes.iter().map(|&(i, j)| num(s.coord_var[i] + s.coord_var[j])));
            row.push(num(s.cov_trace));
            csv.row(&row)?;
        }
    }
    written.push(csv.finish()?);

    let mut header: Vec<String> = vec!["alpha".into()];
    header.extend(planes.iter().map(|(i, j)| format!("final_plane_x{}_x{}", i + 1, j + 1)));
    header.extend(["final_cov_trace".into(), "failed_steps".into()]);
    let mut csv = CsvArtifact::create(out, "summary.csv", &header)?;
    for run in &runs {
        let mut row = vec![num(run.alpha)];
        let final_cov = run.series.last().map_or(0.0, |s| s.cov_trace);
        if run.final_positions.len() >= 2 {
            row.extend(cloud_snapshot(&run.final_positions, &planes)?.iter().map(|p| num(p.cov_trace)));
        } else {
            row.extend(planes.iter().map(|_| num(0.0)));
        }
        row.push(num(final_cov));
        row.push(run.failed_steps.to_string());
        csv.row(&row)?;
    }
    written.push(csv.finish()?);
    Ok(written)
}
