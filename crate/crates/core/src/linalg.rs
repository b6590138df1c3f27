//! Small dense linear algebra used across the crate.
//!
//! Vectors and matrices are `nalgebra` dynamic types. The symmetric
//! eigensolver and the conjugate gradient loop are written here because the
//! quadratic analysis and the matrix-free inner solve need their internals
//! (sweep counts, breakdown detection) rather than a black box.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Eigen-decomposition `A = V diag(values) Vᵀ` of a symmetric matrix, with
/// eigenvalues ascending and the columns of `vectors` orthonormal.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vector,
    pub vectors: Matrix,
}

impl SymEigen {
    pub fn reconstruct(&self) -> Matrix {
        let d = Matrix::from_diagonal(&self.values);
        &self.vectors * d * self.vectors.transpose()
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotations for a symmetric matrix.
///
/// Only the symmetric part `(A + Aᵀ)/2` is used. Sweeps stop once the
/// off-diagonal Frobenius mass falls below `1e-15` of the total.
pub fn sym_eigen(a: &Matrix) -> Result<SymEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut m = (a + a.transpose()) * 0.5;
    let mut v = Matrix::identity(n, n);
    let total = m.norm().max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * total {
            return Ok(sorted(m, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::NoConvergence(format!(
        "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps"
    )))
}

fn sorted(m: Matrix, v: Matrix) -> SymEigen {
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| m[(i, i)]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    SymEigen { values, vectors }
}

/// Solves `A x = b` for symmetric positive-definite `A` by Cholesky.
/// Returns `None` when `A` is not numerically SPD.
pub fn spd_solve(a: &Matrix, b: &Vector) -> Option<Vector> {
    let chol = nalgebra::Cholesky::new(a.clone())?;
    let x = chol.solve(b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Outcome of a conjugate gradient solve.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vector,
    pub iters: usize,
    pub converged: bool,
    /// A search direction with `pᵀ A p <= 0` was met; the operator is not SPD.
    pub breakdown: bool,
}

/// Matrix-free conjugate gradients for `A x = b` from `x = 0`, stopping when
/// `‖r‖ <= rel_tol · ‖b‖`.
pub fn conjugate_gradient<F>(apply: F, b: &Vector, rel_tol: f64, max_iters: usize) -> CgOutcome
where
    F: Fn(&Vector) -> Vector,
{
    let n = b.len();
    let mut x = Vector::zeros(n);
    let mut r = b.clone();
    let target = rel_tol * b.norm();
    if r.norm() <= target {
        return CgOutcome { x, iters: 0, converged: true, breakdown: false };
    }
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for it in 1..=max_iters {
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return CgOutcome { x, iters: it, converged: false, breakdown: true };
        }
        let step = rr / pap;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        let rr_next = r.dot(&r);
        if rr_next.sqrt() <= target {
            return CgOutcome { x, iters: it, converged: true, breakdown: false };
        }
        p *= rr_next / rr;
        p += &r;
        rr = rr_next;
    }
    CgOutcome { x, iters: max_iters, converged: false, breakdown: false }
}

/// Crude estimate of the smallest eigenvalue of a symmetric operator from
/// `iters` power iterations on `J` followed by `iters` on `σI − J`.
pub fn min_eigenvalue_estimate<F>(apply: F, n: usize, iters: usize) -> f64
where
    F: Fn(&Vector) -> Vector,
{
    // deterministic, not aligned with any coordinate axis
    let start = Vector::from_fn(n, |i, _| 1.0 + 0.1 * (i as f64 + 1.0).sin());
    let rayleigh = |op: &dyn Fn(&Vector) -> Vector| {
        let mut q = start.normalize();
        let mut est = 0.0;
        for _ in 0..iters.max(1) {
            let z = op(&q);
            est = q.dot(&z);
            let nz = z.norm();
            if nz == 0.0 || !nz.is_finite() {
                break;
            }
            q = z / nz;
        }
        est
    };
    let top = rayleigh(&|q: &Vector| apply(q));
    let sigma = top.abs() * 1.01 + 1e-12;
    let shifted = rayleigh(&|q: &Vector| q * sigma - apply(q));
    sigma - shifted
}

/// Pairwise (cascade) summation; the reduction order depends only on the
/// slice length, never on thread scheduling.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
