//! Resolvent evaluation `x = prox_{λf}(c)`, the unique root of the
//! fixed-point residual `g(u) = u − c + λ∇f(u)`.
//!
//! The solver is a damped Newton (Levenberg–Marquardt) iteration with
//! Jacobian `J = I + λ∇²f(u)`. Linear systems are solved by a dense Cholesky
//! factorization for small problems or by matrix-free conjugate gradients
//! driven by Hessian-vector products. Steps are shortened geometrically
//! until the residual norm does not increase, and the loop stops at the
//! first iterate with `‖g‖ ≤ δ`.
//!
//! When `J` is not positive definite (nonconvex `f` with `λ λ_min(∇²f) ≤ −1`)
//! the step is computed from `J + εI` instead. That direction descends the
//! prox objective `φ(u) = λ f(u) + ½‖u − c‖²` but not necessarily `‖g‖`, so
//! damped steps are backtracked on `φ`.
//!
//! For `μ`-strongly convex `f`, `g` is `(1 + λμ)`-strongly monotone, so every
//! returned iterate satisfies `‖u − prox(c)‖ ≤ ‖g(u)‖ / (1 + λμ)`; this is
//! reported as [`InnerResult::error_bound`].

use crate::error::{check_dim, Error, Result};
use crate::linalg::{conjugate_gradient, min_eigenvalue_estimate, spd_solve, Matrix, Vector};
use crate::objectives::{Objective, Quadratic};

/// Dimension up to which [`LinearSolve::Auto`] factorizes `J` densely.
pub const DIRECT_MAX_DIM: usize = 512;

/// Relative CG tolerance used by [`LinearSolve::Auto`] above [`DIRECT_MAX_DIM`].
pub const AUTO_CG_TOL: f64 = 1e-10;

/// Power iterations used to estimate `λ_min(J)` before damping.
const POWER_ITERS: usize = 5;
const DAMPING_MARGIN: f64 = 0.1;
const MAX_DAMPING_RETRIES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearSolve {
    /// Dense when `dim ≤ DIRECT_MAX_DIM`, otherwise CG at `AUTO_CG_TOL`.
    Auto,
    Direct,
    Cg { tol: f64, max_iters: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarmStart {
    PreviousX,
    Center,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerConfig {
    /// Residual target `δ`.
    pub residual_tol: f64,
    /// Maximum number of Newton steps.
    pub max_iters: usize,
    pub linear_solve: LinearSolve,
    pub backtrack_beta: f64,
    /// Step halvings allowed per Newton step.
    pub max_backtracks: usize,
    pub warm_start: WarmStart,
    /// Bypass the iteration with the closed-form resolvent when the
    /// objective is a [`Quadratic`].
    pub closed_form: bool,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-10,
            max_iters: 50,
            linear_solve: LinearSolve::Auto,
            backtrack_beta: 0.5,
            max_backtracks: 30,
            warm_start: WarmStart::PreviousX,
            closed_form: false,
        }
    }
}

impl InnerConfig {
    pub fn with_tol(residual_tol: f64) -> Self {
        Self { residual_tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0) {
            return Err(Error::Config(format!(
                "residual_tol must be positive, got {}",
                self.residual_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("inner max_iters must be at least 1".into()));
        }
        if !(self.backtrack_beta > 0.0 && self.backtrack_beta < 1.0) {
            return Err(Error::Config(format!(
                "backtrack_beta must lie in (0, 1), got {}",
                self.backtrack_beta
            )));
        }
        if let LinearSolve::Cg { tol, max_iters } = self.linear_solve {
            if !(tol > 0.0) || max_iters == 0 {
                return Err(Error::Config("cg needs tol > 0 and max_iters ≥ 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub x: Vector,
    pub residual_norm: f64,
    /// Newton steps taken.
    pub iters: usize,
    pub cg_iters_total: usize,
    pub converged: bool,
    /// `‖g(x)‖ / (1 + λμ)`; `None` when the objective is not strongly convex.
    pub error_bound: Option<f64>,
    /// Newton steps that needed the `J + εI` fallback.
    pub damped_steps: usize,
    /// Backtracking found no non-increasing trial and the loop stopped early.
    pub stalled: bool,
}

/// `g(u) = u − c + λ∇f(u)`.
pub fn residual(obj: &dyn Objective, lambda: f64, c: &Vector, u: &Vector) -> Result<Vector> {
    check_dim("center", c.len(), obj.dim())?;
    let grad = obj.gradient(u)?;
    Ok(u - c + grad * lambda)
}

/// Solves `(I + λA) x = c` directly.
pub fn prox_quadratic_closed_form(quad: &Quadratic, lambda: f64, c: &Vector) -> Result<Vector> {
    let n = quad.dim();
    check_dim("center", c.len(), n)?;
    // x + λ(Ax − b) = c
    let rhs = c + quad.linear_term() * lambda;
    let mut j = quad.matrix() * lambda;
    for i in 0..n {
        j[(i, i)] += 1.0;
    }
    spd_solve(&j, &rhs)
        .ok_or_else(|| Error::Degenerate(format!("I + λA is not SPD for λ = {lambda}")))
}

struct NewtonStep {
    s: Vector,
    cg_iters: usize,
    damped: bool,
}

fn newton_step(
    obj: &dyn Objective,
    lambda: f64,
    u: &Vector,
    g: &Vector,
    solve: LinearSolve,
) -> Result<NewtonStep> {
    let n = obj.dim();
    let rhs = -g;
    let solve = match solve {
        LinearSolve::Auto if n <= DIRECT_MAX_DIM => LinearSolve::Direct,
        LinearSolve::Auto => LinearSolve::Cg { tol: AUTO_CG_TOL, max_iters: 4 * n },
        other => other,
    };
    match solve {
        LinearSolve::Direct | LinearSolve::Auto => {
            let mut j = obj.hessian(u)? * lambda;
            for i in 0..n {
                j[(i, i)] += 1.0;
            }
            if let Some(s) = spd_solve(&j, &rhs) {
                return Ok(NewtonStep { s, cg_iters: 0, damped: false });
            }
            let mut eps = damping(|p| &j * p, n);
            for _ in 0..MAX_DAMPING_RETRIES {
                let mut jd = j.clone();
                for i in 0..n {
                    jd[(i, i)] += eps;
                }
                if let Some(s) = spd_solve(&jd, &rhs) {
                    return Ok(NewtonStep { s, cg_iters: 0, damped: true });
                }
                eps = 2.0 * eps + DAMPING_MARGIN;
            }
            Err(Error::Degenerate("damped Jacobian never became SPD".into()))
        }
        LinearSolve::Cg { tol, max_iters } => {
            let apply = |p: &Vector, shift: f64| -> Vector {
                let hp = obj.hvp(u, p).expect("dimensions checked by caller");
                p * (1.0 + shift) + hp * lambda
            };
            let out = conjugate_gradient(|p| apply(p, 0.0), &rhs, tol, max_iters);
            if !out.breakdown {
                return Ok(NewtonStep { s: out.x, cg_iters: out.iters, damped: false });
            }
            let mut cg_iters = out.iters;
            let mut eps = damping(|p| apply(p, 0.0), n);
            for _ in 0..MAX_DAMPING_RETRIES {
                let out = conjugate_gradient(|p| apply(p, eps), &rhs, tol, max_iters);
                cg_iters += out.iters;
                if !out.breakdown {
                    return Ok(NewtonStep { s: out.x, cg_iters, damped: true });
                }
                eps = 2.0 * eps + DAMPING_MARGIN;
            }
            Err(Error::Degenerate("damped Jacobian never became SPD".into()))
        }
    }
}

/// `ε = max(0, DAMPING_MARGIN − λ̂_min(J − I))`, i.e. enough shift to put the
/// estimated smallest eigenvalue of `J + εI` at `1 + DAMPING_MARGIN`.
fn damping<F: Fn(&Vector) -> Vector>(apply_j: F, n: usize) -> f64 {
    let lam_min_j = min_eigenvalue_estimate(apply_j, n, POWER_ITERS);
    (DAMPING_MARGIN - (lam_min_j - 1.0)).max(0.0)
}

/// LM/Newton iteration for `prox_{λf}(c)` from `u0`.
///
/// Exhausting `max_iters` is not an error: the result carries
/// `converged = false` and the last (smallest-residual) iterate.
pub fn solve_prox(
    obj: &dyn Objective,
    lambda: f64,
    c: &Vector,
    u0: &Vector,
    cfg: &InnerConfig,
) -> Result<InnerResult> {
    cfg.validate()?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    check_dim("u0", u0.len(), obj.dim())?;
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial iterate is not finite".into()));
    }

    let mut u = u0.clone();
    let mut g = residual(obj, lambda, c, &u)?;
    let mut r = g.norm();
    let mut iters = 0;
    let mut cg_iters_total = 0;
    let mut damped_steps = 0;
    let mut stalled = false;
    // damped steps may raise ‖g‖; remember the smallest seen
    let mut best: Option<(Vector, f64)> = None;

    while r > cfg.residual_tol && iters < cfg.max_iters {
        let step = newton_step(obj, lambda, &u, &g, cfg.linear_solve)?;
        iters += 1;
        cg_iters_total += step.cg_iters;
        damped_steps += usize::from(step.damped);

        let mut s = step.s;
        let mut accepted = None;
        let phi_u = if step.damped { prox_objective(obj, lambda, c, &u)? } else { 0.0 };
        for _ in 0..=cfg.max_backtracks {
            let trial = &u + &s;
            let g_trial = residual(obj, lambda, c, &trial)?;
            let r_trial = g_trial.norm();
            let decrease = if step.damped {
                prox_objective(obj, lambda, c, &trial)? < phi_u
            } else {
                r_trial <= r
            };
            if decrease {
                accepted = Some((trial, g_trial, r_trial));
                break;
            }
            s *= cfg.backtrack_beta;
        }
        match accepted {
            Some((trial, g_trial, r_trial)) => {
                if r_trial > r && best.as_ref().is_none_or(|(_, rb)| r < *rb) {
                    best = Some((u.clone(), r));
                }
                u = trial;
                g = g_trial;
                r = r_trial;
            }
            None => {
                // no trial along the Newton direction reduced ‖g‖: roundoff floor
                stalled = true;
                break;
            }
        }
    }

    if r > cfg.residual_tol {
        if let Some((bu, br)) = best.filter(|(_, br)| *br < r) {
            u = bu;
            r = br;
        }
    }
    let mu = obj.mu();
    Ok(InnerResult {
        converged: r <= cfg.residual_tol,
        error_bound: (mu > 0.0).then(|| r / (1.0 + lambda * mu)),
        x: u,
        residual_norm: r,
        iters,
        cg_iters_total,
        damped_steps,
        stalled,
    })
}

/// `φ(u) = λ f(u) + ½‖u − c‖²`, whose gradient is the residual `g`.
pub fn prox_objective(obj: &dyn Objective, lambda: f64, c: &Vector, u: &Vector) -> Result<f64> {
    Ok(lambda * obj.value(u)? + 0.5 * (u - c).norm_squared())
}

/// Dense identity-plus-scaled-Hessian `I + λ∇²f(u)`, exposed for diagnostics.
pub fn jacobian(obj: &dyn Objective, lambda: f64, u: &Vector) -> Result<Matrix> {
    let n = obj.dim();
    let mut j = obj.hessian(u)? * lambda;
    for i in 0..n {
        j[(i, i)] += 1.0;
    }
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{LogCosh, RidgeLogistic};
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn identity_quad(n: usize) -> Quadratic {
        Quadratic::new(Matrix::identity(n, n), Vector::zeros(n)).unwrap()
    }

    #[test]
    fn residual_examples() {
        let q = identity_quad(1);
        assert_eq!(residual(&q, 0.0, &v(&[2.0]), &v(&[2.0])).unwrap(), v(&[0.0]));
        assert_eq!(residual(&q, 1.0, &v(&[2.0]), &v(&[1.0])).unwrap(), v(&[0.0]));
        let l = RidgeLogistic::synthetic(20, 2, 0.3, 5).unwrap();
        let c = v(&[0.4, -0.1]);
        let lam = 0.7;
        let expect = l.gradient(&c).unwrap() * lam;
        assert!((residual(&l, lam, &c, &c).unwrap() - expect).norm() < 1e-15);
    }

    #[test]
    fn closed_form_examples() {
        let q = identity_quad(2);
        let x = prox_quadratic_closed_form(&q, 1.0, &v(&[2.0, 2.0])).unwrap();
        assert!((x - v(&[1.0, 1.0])).norm() < 1e-15);
        let d = Quadratic::new(Matrix::from_diagonal(&v(&[1.0, 1.0, 3.0])), Vector::zeros(3)).unwrap();
        let x = prox_quadratic_closed_form(&d, 1.0, &v(&[2.0, 2.0, 4.0])).unwrap();
        assert!((x - v(&[1.0, 1.0, 1.0])).norm() < 1e-15);
        let c = v(&[0.3, -2.0, 5.0]);
        let x = prox_quadratic_closed_form(&d, 1e-14, &c).unwrap();
        assert!((x - c).norm() < 1e-12);
    }

    #[test]
    fn quadratic_newton_is_exact_in_one_step() {
        let a = Matrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let q = Quadratic::new(a, v(&[1.0, -2.0, 0.5])).unwrap();
        let c = v(&[3.0, 1.0, -1.0]);
        let res = solve_prox(&q, 2.5, &c, &v(&[10.0, -7.0, 4.0]), &InnerConfig::with_tol(1e-12)).unwrap();
        let exact = prox_quadratic_closed_form(&q, 2.5, &c).unwrap();
        assert_eq!(res.iters, 1);
        assert!(res.converged && res.residual_norm <= 1e-12);
        assert!((res.x - exact).norm() < 1e-12);
    }

    #[test]
    fn logcosh_symmetric_fixed_point() {
        let l = LogCosh::new(Matrix::identity(1, 1), v(&[0.0])).unwrap();
        let res = solve_prox(&l, 1.0, &v(&[0.0]), &v(&[0.0]), &InnerConfig::default()).unwrap();
        assert_eq!(res.x, v(&[0.0]));
        assert_eq!(res.residual_norm, 0.0);
        assert_eq!(res.iters, 0);
        assert!(res.error_bound.is_none());
    }

    #[test]
    fn cg_path_matches_direct_path() {
        let l = RidgeLogistic::synthetic(200, 6, 0.1, 9).unwrap();
        let c = Vector::from_fn(6, |i, _| (i as f64 - 2.5) * 0.4);
        let direct = solve_prox(&l, 30.0, &c, &Vector::zeros(6), &InnerConfig::with_tol(1e-12)).unwrap();
        let cfg = InnerConfig {
            linear_solve: LinearSolve::Cg { tol: 1e-12, max_iters: 100 },
            ..InnerConfig::with_tol(1e-12)
        };
        let cg = solve_prox(&l, 30.0, &c, &Vector::zeros(6), &cfg).unwrap();
        assert!(cg.converged && cg.cg_iters_total > 0);
        assert!((cg.x - direct.x).norm() < 1e-11);
    }

    #[test]
    fn max_iters_exhaustion_returns_best_iterate() {
        let l = RidgeLogistic::synthetic(100, 4, 0.1, 2).unwrap();
        let c = v(&[3.0, -3.0, 2.0, 1.0]);
        let cfg = InnerConfig { max_iters: 1, ..InnerConfig::with_tol(1e-14) };
        let u0 = Vector::zeros(4);
        let r0 = residual(&l, 50.0, &c, &u0).unwrap().norm();
        let res = solve_prox(&l, 50.0, &c, &u0, &cfg).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iters, 1);
        assert!(res.residual_norm <= r0);
        assert_relative_eq!(res.error_bound.unwrap(), res.residual_norm / (1.0 + 50.0 * 0.1));
    }

    #[test]
    fn nonconvex_jacobian_triggers_damping() {
        // x far from the target, with Q u − c < 0 so ∇²f has negative diagonal
        let a = Matrix::identity(2, 2);
        let l = LogCosh::with_target(a, &v(&[3.0, 3.0])).unwrap();
        let u0 = v(&[0.2, -0.1]);
        let j = jacobian(&l, 10.0, &u0).unwrap();
        assert!(spd_solve(&j, &v(&[1.0, 1.0])).is_none(), "test needs an indefinite Jacobian");
        for solve in [LinearSolve::Direct, LinearSolve::Cg { tol: 1e-12, max_iters: 50 }] {
            let cfg = InnerConfig { linear_solve: solve, max_iters: 200, ..InnerConfig::default() };
            let res = solve_prox(&l, 10.0, &u0, &u0, &cfg).unwrap();
            assert!(res.damped_steps >= 1, "{solve:?}");
            assert!(res.converged, "{solve:?}: residual {}", res.residual_norm);
        }
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        let q = identity_quad(2);
        let c = v(&[1.0, 1.0]);
        assert!(solve_prox(&q, 0.0, &c, &c, &InnerConfig::default()).is_err());
        assert!(solve_prox(&q, 1.0, &c, &v(&[f64::NAN, 0.0]), &InnerConfig::default()).is_err());
        let bad = InnerConfig { backtrack_beta: 1.0, ..InnerConfig::default() };
        assert!(solve_prox(&q, 1.0, &c, &c, &bad).is_err());
        let bad = InnerConfig { residual_tol: 0.0, ..InnerConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
