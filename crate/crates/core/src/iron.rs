//! The outer IRON_FI iteration.
//!
//! One step maps `(x, v, γ)` to the next state:
//!
//! ```text
//! τ = 1/α + μ/γ            λ = α / (γ (1 + τ))
//! c = (v + τ x) / (1 + τ)  ξ = √α Σ^{1/2} η / (1 + τ),  η ~ N(0, I)
//! x⁺ = prox_{λf}(c + ξ)
//! v⁺ = x⁺ + (x⁺ − x) / α
//! γ⁺ = (γ + α μ) / (1 + α)
//! ```
//!
//! `μ` here is the dynamics parameter [`Dynamics::mu`]. It equals the
//! strong-convexity modulus in the convex theory but is a free parameter for
//! nonconvex objectives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result, StepFailure};
use crate::inner::{prox_quadratic_closed_form, residual, solve_prox, InnerConfig, WarmStart};
use crate::linalg::{Matrix, Vector};
use crate::objectives::Objective;

#[derive(Debug, Clone, PartialEq)]
pub struct IronState {
    pub x: Vector,
    /// Lifted auxiliary variable; `v − x` is the physical velocity.
    pub v: Vector,
    pub gamma: f64,
    pub k: usize,
}

impl IronState {
    pub fn new(x: Vector, v: Vector, gamma: f64) -> Result<Self> {
        check_dim("v", v.len(), x.len())?;
        if !(gamma > 0.0) {
            return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self { x, v, gamma, k: 0 })
    }

    /// Zero physical velocity: `v = x`.
    pub fn at_rest(x: Vector, gamma: f64) -> Result<Self> {
        let v = x.clone();
        Self::new(x, v, gamma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepParams {
    pub alpha: f64,
    pub tau: f64,
    pub lambda: f64,
    pub center: Vector,
}

/// Derived quantities of one outer step.
pub fn step_params(alpha: f64, gamma: f64, mu: f64, x: &Vector, v: &Vector) -> Result<StepParams> {
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("alpha must be finite and ≥ 1, got {alpha}")));
    }
    if !(gamma > 0.0) || !(mu > 0.0) {
        return Err(Error::InvalidInput(format!(
            "gamma and mu must be positive, got gamma = {gamma}, mu = {mu}"
        )));
    }
    check_dim("v", v.len(), x.len())?;
    let tau = 1.0 / alpha + mu / gamma;
    let lambda = alpha / (gamma * (1.0 + tau));
    let center = (v + x * tau) / (1.0 + tau);
    Ok(StepParams { alpha, tau, lambda, center })
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    /// `Σ = ρ² I`.
    Isotropic { rho: f64 },
    /// `Σ = S Sᵀ` with `S = sigma_sqrt`.
    General { sigma_sqrt: Matrix },
}

/// Diffusion noise model together with the master seed of its random
/// streams.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub seed: u64,
}

/// Each outer step owns `2^32` ChaCha words of its particle's stream.
const STEP_WORD_SHIFT: u32 = 32;
const INIT_KEY_TWEAK: u64 = 0x9e37_79b9_7f4a_7c15;

impl NoiseModel {
    pub fn isotropic(rho: f64, seed: u64) -> Self {
        Self { kind: NoiseKind::Isotropic { rho }, seed }
    }

    pub fn general(sigma_sqrt: Matrix, seed: u64) -> Self {
        Self { kind: NoiseKind::General { sigma_sqrt }, seed }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match &self.kind {
            NoiseKind::Isotropic { rho } if !(*rho >= 0.0) || !rho.is_finite() => {
                Err(Error::Config(format!("rho must be finite and ≥ 0, got {rho}")))
            }
            NoiseKind::General { sigma_sqrt } if sigma_sqrt.nrows() != dim || sigma_sqrt.ncols() != dim => {
                Err(Error::Config(format!(
                    "sigma_sqrt must be {dim}x{dim}, got {}x{}",
                    sigma_sqrt.nrows(),
                    sigma_sqrt.ncols()
                )))
            }
            _ => Ok(()),
        }
    }

    /// `tr(Σ)`; equals `n ρ²` in the isotropic case.
    pub fn trace(&self, dim: usize) -> f64 {
        match &self.kind {
            NoiseKind::Isotropic { rho } => dim as f64 * rho * rho,
            NoiseKind::General { sigma_sqrt } => sigma_sqrt.norm_squared(),
        }
    }

    /// `Σ = S Sᵀ` as a dense matrix.
    pub fn covariance(&self, dim: usize) -> Matrix {
        match &self.kind {
            NoiseKind::Isotropic { rho } => Matrix::identity(dim, dim) * (rho * rho),
            NoiseKind::General { sigma_sqrt } => sigma_sqrt * sigma_sqrt.transpose(),
        }
    }

    pub fn is_silent(&self) -> bool {
        match &self.kind {
            NoiseKind::Isotropic { rho } => *rho == 0.0,
            NoiseKind::General { sigma_sqrt } => sigma_sqrt.iter().all(|&s| s == 0.0),
        }
    }

    /// Random stream for `(particle, step)`: key from the master seed,
    /// ChaCha stream id from the particle, block counter from the step. The
    /// draws of a step do not depend on what other particles or steps
    /// consumed, so ensembles are reproducible under any scheduling.
    pub fn stream(&self, particle: u64, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(particle);
        rng.set_word_pos(u128::from(step) << STEP_WORD_SHIFT);
        rng
    }

    /// Stream reserved for drawing a particle's initial condition.
    pub fn init_stream(&self, particle: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ INIT_KEY_TWEAK);
        rng.set_stream(particle);
        rng
    }
}

/// Draws `ξ = (√α / (1 + τ)) Σ^{1/2} η`.
pub fn sample_center_noise<R: Rng + ?Sized>(model: &NoiseModel, params: &StepParams, rng: &mut R) -> Vector {
    let n = params.center.len();
    if model.is_silent() {
        return Vector::zeros(n);
    }
    let eta = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    center_noise_from_normals(model, params, &eta)
}

/// The deterministic part of [`sample_center_noise`] for given normals `η`.
pub fn center_noise_from_normals(model: &NoiseModel, params: &StepParams, eta: &Vector) -> Vector {
    let scale = params.alpha.sqrt() / (1.0 + params.tau);
    match &model.kind {
        NoiseKind::Isotropic { rho } => eta * (scale * rho),
        NoiseKind::General { sigma_sqrt } => sigma_sqrt * eta * scale,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaMode {
    /// `γ` frozen at its initial value.
    Fixed,
    /// `γ⁺ = (γ + αμ)/(1 + α)`.
    Updated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dynamics {
    /// `μ` in `τ` and in the damping update.
    pub mu: f64,
    pub gamma_mode: GammaMode,
}

impl Dynamics {
    pub fn new(mu: f64, gamma_mode: GammaMode) -> Self {
        Self { mu, gamma_mode }
    }

    pub fn next_gamma(&self, gamma: f64, alpha: f64) -> f64 {
        match self.gamma_mode {
            GammaMode::Fixed => gamma,
            GammaMode::Updated => (gamma + alpha * self.mu) / (1.0 + alpha),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub alpha: f64,
    pub tau: f64,
    pub lambda: f64,
    pub inner_iters: usize,
    pub cg_iters: usize,
    pub residual_norm: f64,
    pub converged: bool,
    pub damped_steps: usize,
}

/// One outer step with noise drawn from `rng`.
///
/// An inner solve that misses its residual target yields
/// [`Error::StepFailed`]; the payload still holds the state built from the
/// best inner iterate.
pub fn outer_step<R: Rng + ?Sized>(
    state: &IronState,
    obj: &dyn Objective,
    alpha: f64,
    dynamics: &Dynamics,
    noise: &NoiseModel,
    inner: &InnerConfig,
    rng: &mut R,
) -> Result<(IronState, StepReport)> {
    let params = step_params(alpha, state.gamma, dynamics.mu, &state.x, &state.v)?;
    let xi = sample_center_noise(noise, &params, rng);
    advance(state, obj, dynamics, params, &xi, inner)
}

/// One outer step with a given center perturbation `ξ`.
pub fn outer_step_with_noise(
    state: &IronState,
    obj: &dyn Objective,
    alpha: f64,
    dynamics: &Dynamics,
    xi: &Vector,
    inner: &InnerConfig,
) -> Result<(IronState, StepReport)> {
    let params = step_params(alpha, state.gamma, dynamics.mu, &state.x, &state.v)?;
    check_dim("xi", xi.len(), state.x.len())?;
    advance(state, obj, dynamics, params, xi, inner)
}

fn advance(
    state: &IronState,
    obj: &dyn Objective,
    dynamics: &Dynamics,
    params: StepParams,
    xi: &Vector,
    inner: &InnerConfig,
) -> Result<(IronState, StepReport)> {
    check_dim("x", state.x.len(), obj.dim())?;
    let z = &params.center + xi;
    let (x_next, mut report) = match obj.as_quadratic().filter(|_| inner.closed_form) {
        Some(quad) => {
            let x = prox_quadratic_closed_form(quad, params.lambda, &z)?;
            let r = residual(obj, params.lambda, &z, &x)?.norm();
            (x, inner_report(&params, 1, 0, r, true, 0))
        }
        None => {
            let u0 = match inner.warm_start {
                WarmStart::PreviousX => &state.x,
                WarmStart::Center => &z,
            };
            let res = solve_prox(obj, params.lambda, &z, u0, inner)?;
            let rep = inner_report(
                &params,
                res.iters,
                res.cg_iters_total,
                res.residual_norm,
                res.converged,
                res.damped_steps,
            );
            (res.x, rep)
        }
    };
    let alpha = params.alpha;
    let v_next = &x_next + (&x_next - &state.x) / alpha;
    let next = IronState {
        x: x_next,
        v: v_next,
        gamma: dynamics.next_gamma(state.gamma, alpha),
        k: state.k + 1,
    };
    if !report.converged {
        report.converged = false;
        return Err(Error::StepFailed(Box::new(StepFailure { state: next, report })));
    }
    Ok((next, report))
}

fn inner_report(
    params: &StepParams,
    inner_iters: usize,
    cg_iters: usize,
    residual_norm: f64,
    converged: bool,
    damped_steps: usize,
) -> StepReport {
    StepReport {
        alpha: params.alpha,
        tau: params.tau,
        lambda: params.lambda,
        inner_iters,
        cg_iters,
        residual_norm,
        converged,
        damped_steps,
    }
}

/// Stepsize sequence `α_k`.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant(f64),
    /// `α_k = seq[k]`; the last entry repeats once the sequence runs out.
    Sequence(Vec<f64>),
}

impl Schedule {
    pub fn alpha(&self, k: usize) -> f64 {
        match self {
            Schedule::Constant(a) => *a,
            Schedule::Sequence(seq) => seq[k.min(seq.len() - 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = match self {
            Schedule::Constant(a) => !(*a >= 1.0),
            Schedule::Sequence(seq) => seq.is_empty() || seq.iter().any(|a| !(*a >= 1.0)),
        };
        if bad {
            return Err(Error::Config("schedule entries must all be ≥ 1 (and nonempty)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `states[k]` is the state after `k` steps; `states[0]` is the input.
    pub states: Vec<IronState>,
    pub reports: Vec<StepReport>,
}

/// Runs `n_steps` outer steps for particle `particle`, drawing step `k`'s
/// noise from `noise.stream(particle, k)`.
#[allow(clippy::too_many_arguments)]
pub fn run_trajectory(
    state0: &IronState,
    obj: &dyn Objective,
    schedule: &Schedule,
    dynamics: &Dynamics,
    noise: &NoiseModel,
    inner: &InnerConfig,
    n_steps: usize,
    particle: u64,
) -> Result<Trajectory> {
    schedule.validate()?;
    noise.validate(obj.dim())?;
    inner.validate()?;
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut reports = Vec::with_capacity(n_steps);
    states.push(state0.clone());
    for k in 0..n_steps {
        let mut rng = noise.stream(particle, k as u64);
        let current = &states[k];
        let (next, report) =
            outer_step(current, obj, schedule.alpha(k), dynamics, noise, inner, &mut rng)?;
        states.push(next);
        reports.push(report);
    }
    Ok(Trajectory { states, reports })
}
