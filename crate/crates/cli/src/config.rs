//! Experiment configuration. One TOML file fully determines one run.

use std::path::{Path, PathBuf};

use ironfi::inner::{InnerConfig, LinearSolve, WarmStart};
use ironfi::iron::{Dynamics, GammaMode, NoiseModel};
use ironfi::linalg::{Matrix, Vector};
use ironfi::objectives::{random_orthogonal, LogCosh, Quadratic, RidgeLogistic};
use ironfi::{experiments, presets};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    /// Particles written per snapshot to `clouds.csv`.
    #[serde(default = "default_cloud_points")]
    pub cloud_points: usize,
    pub objective: ObjectiveSpec,
    pub dynamics: DynamicsSpec,
    pub noise: NoiseSpec,
    pub ensemble: EnsembleSpec,
    pub grids: GridSpec,
    #[serde(default)]
    pub inner: InnerSpec,
}

fn default_cloud_points() -> usize {
    2000
}

fn default_reference_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// `A = Qᵀ diag(eigenvalues) Q`, `Q = random_orthogonal(n, rotation_seed)`,
    /// `b = b_const · 1`.
    Quadratic { eigenvalues: Vec<f64>, rotation_seed: u64, b_const: f64 },
    Logistic {
        n_samples: usize,
        dim: usize,
        lambda_reg: f64,
        data_seed: u64,
        /// Gradient-norm target of the reference minimizer.
        #[serde(default = "default_reference_tol")]
        reference_tol: f64,
    },
    /// `A` row-major, square; `b = A u(target)`.
    Logcosh { a: Vec<f64>, target: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaModeSpec {
    Fixed,
    Updated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub mu: f64,
    pub gamma0: f64,
    pub gamma_mode: GammaModeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Isotropic { rho: f64, seed: u64 },
    /// `Σ^{1/2}` read from a headerless comma-separated square matrix,
    /// relative to the config file.
    General { sigma_sqrt_path: PathBuf, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Point { x0: Vec<f64>, v0: Vec<f64> },
    GaussianBall { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub n_particles: usize,
    pub n_steps: usize,
    pub burn_in_fraction: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub init: InitSpec,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub delta: Vec<f64>,
    /// Lower end of the slope-fit range; defaults to the upper half of the
    /// `α` grid in log-space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_min: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolveSpec {
    Auto,
    Direct,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStartSpec {
    PreviousX,
    Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerSpec {
    pub tol: f64,
    pub max_iters: usize,
    pub linear_solve: LinearSolveSpec,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub beta: f64,
    pub max_backtracks: usize,
    pub warm_start: WarmStartSpec,
    pub closed_form: bool,
}

impl Default for InnerSpec {
    fn default() -> Self {
        let d = InnerConfig::default();
        Self {
            tol: d.residual_tol,
            max_iters: d.max_iters,
            linear_solve: LinearSolveSpec::Auto,
            cg_tol: 1e-10,
            cg_max_iters: 500,
            beta: d.backtrack_beta,
            max_backtracks: d.max_backtracks,
            warm_start: WarmStartSpec::PreviousX,
            closed_form: d.closed_form,
        }
    }
}

/// A built objective together with what the commands need to know about it.
pub enum BuiltObjective {
    Quadratic(Quadratic),
    Logistic { obj: RidgeLogistic, spec: LogisticKey },
    Logcosh(LogCosh),
}

/// Parameters identifying a logistic instance, used to validate the
/// reference-minimizer cache.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticKey {
    pub n_samples: usize,
    pub dim: usize,
    pub lambda_reg: f64,
    pub data_seed: u64,
    pub reference_tol: f64,
}

impl BuiltObjective {
    pub fn as_dyn(&self) -> &dyn ironfi::Objective {
        match self {
            BuiltObjective::Quadratic(q) => q,
            BuiltObjective::Logistic { obj, .. } => obj,
            BuiltObjective::Logcosh(l) => l,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let NoiseSpec::General { sigma_sqrt_path, .. } = &mut cfg.noise {
            if sigma_sqrt_path.is_relative() {
                if let Some(dir) = path.parent() {
                    *sigma_sqrt_path = dir.join(&*sigma_sqrt_path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks that do not depend on which command runs.
    pub fn validate(&self) -> Result<()> {
        if self.grids.alpha.is_empty() {
            return Err(CliError::Config("grids.alpha is empty".into()));
        }
        let ens = self.ensemble_config()?;
        ens.validate()?;
        self.inner_config(self.inner.tol).validate()?;
        let n = self.objective_dim();
        if ens.init.dim() != n {
            return Err(CliError::Config(format!(
                "initial point has dimension {}, objective has {n}",
                ens.init.dim()
            )));
        }
        if !(self.dynamics.mu > 0.0) || !(self.dynamics.gamma0 > 0.0) {
            return Err(CliError::Config("dynamics.mu and dynamics.gamma0 must be positive".into()));
        }
        if self.grids.delta.iter().any(|d| !(*d > 0.0)) {
            return Err(CliError::Config("grids.delta entries must be positive".into()));
        }
        Ok(())
    }

    pub fn objective_dim(&self) -> usize {
        match &self.objective {
            ObjectiveSpec::Quadratic { eigenvalues, .. } => eigenvalues.len(),
            ObjectiveSpec::Logistic { dim, .. } => *dim,
            ObjectiveSpec::Logcosh { target, .. } => target.len(),
        }
    }

    pub fn build_objective(&self) -> Result<BuiltObjective> {
        Ok(match &self.objective {
            ObjectiveSpec::Quadratic { eigenvalues, rotation_seed, b_const } => {
                let q = random_orthogonal(eigenvalues.len(), *rotation_seed);
                BuiltObjective::Quadratic(Quadratic::from_spectrum(eigenvalues, &q, *b_const)?)
            }
            ObjectiveSpec::Logistic { n_samples, dim, lambda_reg, data_seed, reference_tol } => BuiltObjective::Logistic {
                obj: RidgeLogistic::synthetic(*n_samples, *dim, *lambda_reg, *data_seed)?,
                spec: LogisticKey {
                    n_samples: *n_samples,
                    dim: *dim,
                    lambda_reg: *lambda_reg,
                    data_seed: *data_seed,
                    reference_tol: *reference_tol,
                },
            },
            ObjectiveSpec::Logcosh { a, target } => {
                let n = target.len();
                if a.len() != n * n {
                    return Err(CliError::Config(format!(
                        "objective.a has {} entries, expected {n}×{n}",
                        a.len()
                    )));
                }
                let a = Matrix::from_row_slice(n, n, a);
                BuiltObjective::Logcosh(LogCosh::with_target(a, &Vector::from_row_slice(target))?)
            }
        })
    }

    pub fn dynamics(&self) -> Dynamics {
        let mode = match self.dynamics.gamma_mode {
            GammaModeSpec::Fixed => GammaMode::Fixed,
            GammaModeSpec::Updated => GammaMode::Updated,
        };
        Dynamics::new(self.dynamics.mu, mode)
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        Ok(match &self.noise {
            NoiseSpec::Isotropic { rho, seed } => NoiseModel::isotropic(*rho, *seed),
            NoiseSpec::General { sigma_sqrt_path, seed } => {
                NoiseModel::general(read_matrix(sigma_sqrt_path)?, *seed)
            }
        })
    }

    pub fn isotropic_rho(&self) -> Option<f64> {
        match &self.noise {
            NoiseSpec::Isotropic { rho, .. } => Some(*rho),
            NoiseSpec::General { .. } => None,
        }
    }

    pub fn set_seed(&mut self, new_seed: u64) {
        match &mut self.noise {
            NoiseSpec::Isotropic { seed, .. } | NoiseSpec::General { seed, .. } => *seed = new_seed,
        }
    }

    pub fn inner_config(&self, tol: f64) -> InnerConfig {
        let s = &self.inner;
        InnerConfig {
            residual_tol: tol,
            max_iters: s.max_iters,
            linear_solve: match s.linear_solve {
                LinearSolveSpec::Auto => LinearSolve::Auto,
                LinearSolveSpec::Direct => LinearSolve::Direct,
                LinearSolveSpec::Cg => LinearSolve::Cg { tol: s.cg_tol, max_iters: s.cg_max_iters },
            },
            backtrack_beta: s.beta,
            max_backtracks: s.max_backtracks,
            warm_start: match s.warm_start {
                WarmStartSpec::PreviousX => WarmStart::PreviousX,
                WarmStartSpec::Center => WarmStart::Center,
            },
            closed_form: s.closed_form,
        }
    }

    pub fn ensemble_config(&self) -> Result<experiments::EnsembleConfig> {
        let e = &self.ensemble;
        let init = match &e.init {
            InitSpec::Point { x0, v0 } => experiments::Init::Point {
                x0: Vector::from_row_slice(x0),
                v0: Vector::from_row_slice(v0),
            },
            InitSpec::GaussianBall { center, radius } => {
                if !(*radius >= 0.0) {
                    return Err(CliError::Config("init radius must be nonnegative".into()));
                }
                experiments::Init::GaussianBall { center: Vector::from_row_slice(center), radius: *radius }
            }
        };
        Ok(experiments::EnsembleConfig {
            n_particles: e.n_particles,
            n_steps: e.n_steps,
            burn_in_fraction: e.burn_in_fraction,
            alpha_grid: self.grids.alpha.clone(),
            seeds: e.seeds.clone(),
            init,
        })
    }

    /// Configuration of the quadratic experiment with the library defaults.
    pub fn quadratic_default() -> Self {
        Self {
            output_dir: "out/quad".into(),
            cloud_points: default_cloud_points(),
            objective: ObjectiveSpec::Quadratic {
                eigenvalues: presets::QUAD_EIGENVALUES.to_vec(),
                rotation_seed: 0,
                b_const: presets::QUAD_B_CONST,
            },
            dynamics: DynamicsSpec {
                mu: presets::QUAD_MU,
                gamma0: presets::QUAD_GAMMA,
                gamma_mode: GammaModeSpec::Fixed,
            },
            noise: NoiseSpec::Isotropic { rho: presets::QUAD_RHO, seed: 2024 },
            ensemble: EnsembleSpec {
                n_particles: 20_000,
                n_steps: 200,
                burn_in_fraction: 0.5,
                seeds: vec![0],
                init: InitSpec::GaussianBall { center: vec![0.0; 3], radius: 0.5 },
            },
            grids: GridSpec { alpha: vec![1.0, 10.0, 200.0, 500.0], delta: vec![], alpha_min: None },
            inner: InnerSpec::default(),
        }
    }

    pub fn logistic_default() -> Self {
        let d = presets::LOGISTIC_DIM;
        Self {
            output_dir: "out/logreg".into(),
            cloud_points: default_cloud_points(),
            objective: ObjectiveSpec::Logistic {
                n_samples: presets::LOGISTIC_SAMPLES,
                dim: d,
                lambda_reg: presets::LOGISTIC_LAMBDA,
                data_seed: 0,
                reference_tol: default_reference_tol(),
            },
            dynamics: DynamicsSpec {
                mu: presets::LOGISTIC_MU,
                gamma0: presets::LOGISTIC_GAMMA0,
                gamma_mode: GammaModeSpec::Updated,
            },
            noise: NoiseSpec::Isotropic { rho: presets::LOGISTIC_RHO, seed: 0 },
            ensemble: EnsembleSpec {
                n_particles: 40,
                n_steps: 60,
                burn_in_fraction: 0.5,
                seeds: vec![0, 1, 2, 3, 4],
                init: InitSpec::Point { x0: vec![0.0; d], v0: vec![0.0; d] },
            },
            grids: GridSpec {
                alpha: vec![10.0, 30.0, 100.0, 300.0, 1000.0, 4000.0],
                delta: vec![1e-10, 1e-8, 1e-6, 1e3],
                alpha_min: Some(100.0),
            },
            inner: InnerSpec::default(),
        }
    }

    pub fn logcosh_default() -> Self {
        Self {
            output_dir: "out/logcosh".into(),
            cloud_points: default_cloud_points(),
            objective: ObjectiveSpec::Logcosh {
                a: presets::LOGCOSH_A.to_vec(),
                target: presets::LOGCOSH_TARGET.to_vec(),
            },
            dynamics: DynamicsSpec {
                mu: presets::LOGCOSH_MU,
                gamma0: presets::LOGCOSH_GAMMA0,
                gamma_mode: GammaModeSpec::Fixed,
            },
            noise: NoiseSpec::Isotropic { rho: presets::LOGCOSH_RHO, seed: 7 },
            ensemble: EnsembleSpec {
                n_particles: 4000,
                n_steps: 200,
                burn_in_fraction: 0.5,
                seeds: vec![0],
                init: InitSpec::GaussianBall {
                    center: presets::LOGCOSH_TARGET.to_vec(),
                    radius: presets::LOGCOSH_INIT_RADIUS,
                },
            },
            grids: GridSpec { alpha: vec![1.0, 10.0, 200.0, 500.0], delta: vec![], alpha_min: None },
            inner: InnerSpec::default(),
        }
    }
}

/// Reads a headerless comma-separated square matrix.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| CliError::Config(format!("{}: {e}", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config(format!("{} must hold a square matrix", path.display())));
    }
    Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}
