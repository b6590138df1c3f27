//! Fully implicit inertial-resolvent stochastic optimization (IRON_FI).
//!
//! The optimizer is the Backward-Euler discretization of a damped,
//! noise-driven accelerated flow. Each step evaluates the resolvent
//! `prox_{λf}` of the objective at an inertial center perturbed by Gaussian
//! noise, and the stationary mean-square error of the iterates decays like
//! `1/α` in the implicit stepsize `α`.
//!
//! * [`objectives`]: the [`Objective`] capability and the test problems.
//! * [`iron`]: step parameters, center noise, the outer step and trajectories.
//! * [`inner`]: the LM/Newton resolvent solver with residual stopping.
//! * [`quad_exact`]: exact stationary covariance for quadratics.
//! * [`experiments`]: Monte Carlo ensembles and the derived statistics.
//! * [`presets`]: the benchmark problems with their default parameters.
//!
//! ```
//! use ironfi::{inner::InnerConfig, iron::*, linalg::{Matrix, Vector}, objectives::Quadratic};
//!
//! let quad = Quadratic::new(Matrix::identity(2, 2), Vector::zeros(2)).unwrap();
//! let state = IronState::at_rest(Vector::from_vec(vec![3.0, 0.0]), 1.0).unwrap();
//! let dynamics = Dynamics::new(1.0, GammaMode::Fixed);
//! let (next, report) =
//!     outer_step_with_noise(&state, &quad, 1.0, &dynamics, &Vector::zeros(2), &InnerConfig::default())
//!         .unwrap();
//! assert!((next.x[0] - 2.25).abs() < 1e-12);
//! assert_eq!(report.inner_iters, 1);
//! ```

pub mod error;
pub mod experiments;
pub mod inner;
pub mod iron;
pub mod linalg;
pub mod objectives;
pub mod presets;
pub mod quad_exact;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/outer-step.md")]
    struct OuterStep;
    #[doc = include_str!("../../../book/src/inner-solve.md")]
    struct InnerSolve;
    #[doc = include_str!("../../../book/src/quadratic-analysis.md")]
    struct QuadraticAnalysis;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct Experiments;
}
pub use objectives::Objective;
