use thiserror::Error;

use crate::iron::{IronState, StepReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("inner solve failed at step {}: residual {:.3e} after {} iterations", .0.state.k, .0.report.residual_norm, .0.report.inner_iters)]
    StepFailed(Box<StepFailure>),

    #[error("unstable dynamics: eigenvalue {eigenvalue} has spectral radius {spectral_radius} >= 1 at alpha = {alpha}")]
    Unstable {
        eigenvalue: f64,
        alpha: f64,
        spectral_radius: f64,
    },

    #[error("noise covariance does not commute with A (relative commutator {0:.3e}); eigendirections do not decouple")]
    NonDecoupling(f64),

    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),
}

/// Payload of [`Error::StepFailed`]: the state built from the best inner
/// iterate, so callers can keep going.
#[derive(Debug, Clone)]
pub struct StepFailure {
    pub state: IronState,
    pub report: StepReport,
}

pub(crate) fn check_dim(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::InvalidInput(format!(
            "{what} has dimension {got}, expected {want}"
        )));
    }
    Ok(())
}
