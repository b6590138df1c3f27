//! Exact stationary analysis for quadratic objectives in the fixed-`γ`
//! regime.
//!
//! With `A = V diag(a) Vᵀ` and isotropic noise, the error coordinates
//! `e = Vᵀ(x − x*)`, `w = Vᵀ(v − x*)` decouple. Each eigendirection follows
//! the linear recursion `z⁺ = M z + g ξ` with `z = (e, w)`,
//!
//! ```text
//! r = 1/(1 + λa),  s = 1 + τ
//! M = [ rτ/s                 r/s          ]
//!     [ (1+1/α) rτ/s − 1/α   (1+1/α) r/s  ]
//! g = r (1, 1 + 1/α)ᵀ,       Var ξ = α ρ² / s²
//! ```
//!
//! and its stationary covariance solves `P = M P Mᵀ + Q`, `Q = Var ξ · g gᵀ`.

use crate::error::{Error, Result};
use crate::iron::NoiseKind;
use crate::linalg::Matrix;
use crate::objectives::{Objective, Quadratic};

pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct EigenRecursion {
    pub a: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub mu: f64,
    pub rho: f64,
    pub tau: f64,
    pub lambda: f64,
    /// Resolvent gain `1/(1 + λa)`.
    pub r: f64,
    /// `1 + τ`.
    pub s: f64,
    pub m: Mat2,
    pub g: [f64; 2],
    /// Variance of the center perturbation, `α ρ² / s²`.
    pub noise_var: f64,
}

/// Builds the 2×2 recursion of one eigendirection with eigenvalue `a`.
pub fn eigen_recursion(a: f64, alpha: f64, gamma: f64, mu: f64, rho: f64) -> Result<EigenRecursion> {
    // eigenvalues come out of an iterative solver; allow roundoff below μ
    if !(mu > 0.0) || !(a >= mu * (1.0 - 1e-10)) {
        return Err(Error::InvalidInput(format!("need a ≥ μ > 0, got a = {a}, μ = {mu}")));
    }
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("alpha must be finite and ≥ 1, got {alpha}")));
    }
    if !(gamma > 0.0) || !(rho >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "need γ > 0 and ρ ≥ 0, got γ = {gamma}, ρ = {rho}"
        )));
    }
    Ok(recursion_unchecked(a, alpha, gamma, mu, rho * rho))
}

fn recursion_unchecked(a: f64, alpha: f64, gamma: f64, mu: f64, rho_sq: f64) -> EigenRecursion {
    let tau = 1.0 / alpha + mu / gamma;
    let s = 1.0 + tau;
    let lambda = alpha / (gamma * s);
    let r = 1.0 / (1.0 + lambda * a);
    let inv_alpha = 1.0 / alpha;
    let a1 = r * tau / s;
    let b1 = r / s;
    let c1 = (1.0 + inv_alpha) * a1 - inv_alpha;
    let d1 = (1.0 + inv_alpha) * b1;
    EigenRecursion {
        a,
        alpha,
        gamma,
        mu,
        rho: rho_sq.sqrt(),
        tau,
        lambda,
        r,
        s,
        m: [[a1, b1], [c1, d1]],
        g: [r, r * (1.0 + inv_alpha)],
        noise_var: alpha * rho_sq / (s * s),
    }
}

impl EigenRecursion {
    /// `z⁺ = M z + g ξ`.
    pub fn step(&self, z: [f64; 2], xi: f64) -> [f64; 2] {
        let m = &self.m;
        [
            m[0][0] * z[0] + m[0][1] * z[1] + self.g[0] * xi,
            m[1][0] * z[0] + m[1][1] * z[1] + self.g[1] * xi,
        ]
    }

    /// `Q = Var ξ · g gᵀ`.
    pub fn q(&self) -> Mat2 {
        let [g0, g1] = self.g;
        let v = self.noise_var;
        [[v * g0 * g0, v * g0 * g1], [v * g0 * g1, v * g1 * g1]]
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.m)
    }
}

/// Spectral radius of a real 2×2 matrix from its characteristic polynomial
/// `t² − tr t + det`.
pub fn spectral_radius(m: &Mat2) -> f64 {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        // avoid cancellation in the smaller root
        let big = 0.5 * (tr.abs() + sq);
        let small = if big > 0.0 { det.abs() / big } else { 0.0 };
        big.max(small)
    } else {
        // complex pair with modulus √det
        det.sqrt()
    }
}

/// Stationary second moments `P = [[p11, p12], [p12, p22]]` of one
/// eigendirection.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryCovariance {
    /// `None` when the recursion is unstable.
    pub p: Option<Mat2>,
    pub spectral_radius: f64,
    pub stable: bool,
}

impl StationaryCovariance {
    /// Stationary position MSE `p11` of the direction.
    pub fn p11(&self) -> Option<f64> {
        self.p.map(|p| p[0][0])
    }
}

pub fn lyapunov_solve(rec: &EigenRecursion) -> Result<StationaryCovariance> {
    lyapunov_solve_2x2(&rec.m, &rec.q())
}

/// Solves `P = M P Mᵀ + Q` for symmetric `Q` through the 3×3 moment system
///
/// ```text
/// [ 1 − a₁²     −2a₁b₁              −b₁²   ] [p11]   [q11]
/// [ −a₁c₁       1 − (a₁d₁ + b₁c₁)   −b₁d₁  ] [p12] = [q12]
/// [ −c₁²        −2c₁d₁              1 − d₁²] [p22]   [q22]
/// ```
///
/// An unstable `M` is reported through `stable = false`, not as an error.
pub fn lyapunov_solve_2x2(m: &Mat2, q: &Mat2) -> Result<StationaryCovariance> {
    let rho = spectral_radius(m);
    if !(rho < 1.0) {
        return Ok(StationaryCovariance { p: None, spectral_radius: rho, stable: false });
    }
    let [[a1, b1], [c1, d1]] = *m;
    let sys = [
        [1.0 - a1 * a1, -2.0 * a1 * b1, -b1 * b1],
        [-a1 * c1, 1.0 - (a1 * d1 + b1 * c1), -b1 * d1],
        [-c1 * c1, -2.0 * c1 * d1, 1.0 - d1 * d1],
    ];
    let [p11, p12, p22] = solve3(sys, [q[0][0], q[0][1], q[1][1]])?;
    Ok(StationaryCovariance {
        p: Some([[p11, p12], [p12, p22]]),
        spectral_radius: rho,
        stable: true,
    })
}

/// Gaussian elimination with partial pivoting on a 3×3 system.
pub fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Result<[f64; 3]> {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[piv][col].abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Degenerate("singular 3x3 moment system".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in (row + 1)..3 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// `‖P − M P Mᵀ − Q‖_F`.
pub fn lyapunov_residual(m: &Mat2, p: &Mat2, q: &Mat2) -> f64 {
    let mp = mul2(m, p);
    let mpmt = mul2(&mp, &transpose2(m));
    let mut acc = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let d = p[i][j] - mpmt[i][j] - q[i][j];
            acc += d * d;
        }
    }
    acc.sqrt()
}

pub fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

pub fn transpose2(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

pub fn frobenius2(a: &Mat2) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// Per-direction noise variances `ρᵢ² = (Vᵀ Σ V)ᵢᵢ`, refusing covariances
/// that do not commute with `A`.
fn direction_variances(quad: &Quadratic, noise: &NoiseKind) -> Result<Vec<f64>> {
    let n = quad.dim();
    let eig = quad.eigen();
    match noise {
        NoiseKind::Isotropic { rho } => Ok(vec![rho * rho; n]),
        NoiseKind::General { sigma_sqrt } => {
            if sigma_sqrt.nrows() != n || sigma_sqrt.ncols() != n {
                return Err(Error::InvalidInput(format!("sigma_sqrt must be {n}x{n}")));
            }
            let sigma: Matrix = sigma_sqrt * sigma_sqrt.transpose();
            let a = quad.matrix();
            let comm = (a * &sigma - &sigma * a).norm();
            let rel = comm / (a.norm() * sigma.norm()).max(f64::MIN_POSITIVE);
            if rel > 1e-10 {
                return Err(Error::NonDecoupling(rel));
            }
            let rotated = eig.vectors.transpose() * sigma * &eig.vectors;
            Ok((0..n).map(|i| rotated[(i, i)]).collect())
        }
    }
}

/// `tr(P_xx) = Σᵢ p11(aᵢ)`, the exact stationary MSE under isotropic noise.
pub fn stationary_mse_exact(quad: &Quadratic, alpha: f64, gamma: f64, mu: f64, rho: f64) -> Result<f64> {
    stationary_mse_exact_with(quad, alpha, gamma, mu, &NoiseKind::Isotropic { rho })
}

/// [`stationary_mse_exact`] for any noise covariance commuting with `A`.
pub fn stationary_mse_exact_with(
    quad: &Quadratic,
    alpha: f64,
    gamma: f64,
    mu: f64,
    noise: &NoiseKind,
) -> Result<f64> {
    let vars = direction_variances(quad, noise)?;
    let eig = quad.eigen();
    let mut total = 0.0;
    for (&a, &var) in eig.values.iter().zip(&vars) {
        let rec = eigen_recursion(a, alpha, gamma, mu, var.max(0.0).sqrt())?;
        let cov = lyapunov_solve(&rec)?;
        match cov.p11() {
            Some(p11) => total += p11,
            None => {
                return Err(Error::Unstable { eigenvalue: a, alpha, spectral_radius: cov.spectral_radius })
            }
        }
    }
    Ok(total)
}

/// `C_quad = γ² ρ² tr(A⁻²) = (γ²/n) σ² tr(A⁻²)`.
pub fn asymptotic_constant(quad: &Quadratic, gamma: f64, rho: f64) -> f64 {
    let tr_inv_sq: f64 = quad.eigen().values.iter().map(|a| 1.0 / (a * a)).sum();
    gamma * gamma * rho * rho * tr_inv_sq
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub alpha: f64,
    /// Spectral radius of `M(aᵢ, α)` per eigenvalue (ascending `aᵢ`).
    pub radii: Vec<f64>,
    pub max_radius: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityTable {
    pub rows: Vec<StabilityRow>,
    /// Smallest grid `α` at which every direction is stable.
    pub first_stable_alpha: Option<f64>,
}

/// Spectral radii over an ascending `α` grid. `ρ` is accepted for symmetry
/// with the other entry points but does not affect `M`.
pub fn stability_threshold(
    quad: &Quadratic,
    gamma: f64,
    mu: f64,
    rho: f64,
    alpha_grid: &[f64],
) -> Result<StabilityTable> {
    if alpha_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Config("alpha grid must be ascending".into()));
    }
    let eig = quad.eigen();
    let mut rows = Vec::with_capacity(alpha_grid.len());
    for &alpha in alpha_grid {
        let radii = eig
            .values
            .iter()
            .map(|&a| eigen_recursion(a, alpha, gamma, mu, rho).map(|r| r.spectral_radius()))
            .collect::<Result<Vec<_>>>()?;
        let max_radius = radii.iter().copied().fold(0.0, f64::max);
        rows.push(StabilityRow { alpha, radii, max_radius, stable: max_radius < 1.0 });
    }
    let first_stable_alpha = rows.iter().find(|r| r.stable).map(|r| r.alpha);
    Ok(StabilityTable { rows, first_stable_alpha })
}
