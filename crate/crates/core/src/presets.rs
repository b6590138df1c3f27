//! Default problem instances for the three test objectives.
//!
//! The quadratic and log-cosh problems live in `R³`; the logistic benchmark
//! is a synthetic ridge-regularized classification problem. Constants not
//! pinned down elsewhere (rotation, linear term, noise levels, data sizes)
//! are fixed here so every experiment and test uses the same instance.

use crate::error::Result;
use crate::iron::GammaMode;
use crate::linalg::{Matrix, Vector};
use crate::objectives::{random_orthogonal, LogCosh, Quadratic, RidgeLogistic};

/// Spectrum of the quadratic test matrix.
pub const QUAD_EIGENVALUES: [f64; 3] = [1.0, 1.0, 3.0];
/// `b = QUAD_B_CONST · 1`.
pub const QUAD_B_CONST: f64 = 1.0;
pub const QUAD_RHO: f64 = 0.1;
/// Fixed damping `γ = μ = 1`.
pub const QUAD_GAMMA: f64 = 1.0;
pub const QUAD_MU: f64 = 1.0;

/// `A = Qᵀ diag(1, 1, 3) Q` with `Q = random_orthogonal(3, seed)`.
pub fn quadratic(seed: u64) -> Result<Quadratic> {
    Quadratic::from_spectrum(&QUAD_EIGENVALUES, &random_orthogonal(3, seed), QUAD_B_CONST)
}

pub const LOGISTIC_SAMPLES: usize = 1000;
pub const LOGISTIC_DIM: usize = 20;
pub const LOGISTIC_LAMBDA: f64 = 0.1;
pub const LOGISTIC_RHO: f64 = 0.05;
/// `μ` fed to the dynamics; equal to the ridge weight.
pub const LOGISTIC_MU: f64 = 0.1;
pub const LOGISTIC_GAMMA0: f64 = 1.0;
pub const LOGISTIC_GAMMA_MODE: GammaMode = GammaMode::Updated;

pub fn logistic(data_seed: u64) -> Result<RidgeLogistic> {
    RidgeLogistic::synthetic(LOGISTIC_SAMPLES, LOGISTIC_DIM, LOGISTIC_LAMBDA, data_seed)
}

pub const LOGCOSH_A: [f64; 9] = [2.0, 0.5, 0.0, 0.5, 1.5, 0.3, 0.0, 0.3, 1.0];
pub const LOGCOSH_TARGET: [f64; 3] = [1.5, -1.2, 1.0];
pub const LOGCOSH_RHO: f64 = 0.1;
/// Dynamics `μ` for the (not strongly convex) log-cosh runs.
pub const LOGCOSH_MU: f64 = 1.0;
pub const LOGCOSH_GAMMA0: f64 = 1.0;
/// Initial particles are drawn from a Gaussian ball of this radius around
/// the target, inside its basin.
pub const LOGCOSH_INIT_RADIUS: f64 = 0.1;

/// `f(x) = ½‖A u(x) − b‖²` with `b = A u(target)`.
pub fn logcosh() -> Result<LogCosh> {
    let a = Matrix::from_row_slice(3, 3, &LOGCOSH_A);
    LogCosh::with_target(a, &logcosh_target())
}

pub fn logcosh_target() -> Vector {
    Vector::from_row_slice(&LOGCOSH_TARGET)
}
