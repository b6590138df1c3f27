//! Objective functions: the [`Objective`] capability and the three test
//! problems (strongly convex quadratic, ridge logistic regression, log-cosh
//! regression).

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{spd_solve, sym_eigen, Matrix, SymEigen, Vector};

/// A smooth objective with exact first and second order information.
///
/// Implementations are immutable after construction and are shared across
/// ensemble worker threads.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    /// Strong-convexity modulus, `0.0` for objectives that are not strongly
    /// convex.
    fn mu(&self) -> f64;

    fn value(&self, x: &Vector) -> Result<f64>;

    fn gradient(&self, x: &Vector) -> Result<Vector>;

    /// Exact Hessian-vector product `∇²f(x) p`.
    fn hvp(&self, x: &Vector, p: &Vector) -> Result<Vector>;

    /// Dense Hessian. The default assembles it column by column from
    /// [`Objective::hvp`].
    fn hessian(&self, x: &Vector) -> Result<Matrix> {
        let n = self.dim();
        let mut h = Matrix::zeros(n, n);
        let mut e = Vector::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            h.set_column(j, &self.hvp(x, &e)?);
            e[j] = 0.0;
        }
        Ok(h)
    }

    /// Downcast hook for the quadratic closed-form fast paths.
    fn as_quadratic(&self) -> Option<&Quadratic> {
        None
    }
}

/// `f(x) = ½ xᵀ A x − bᵀ x` with `A` symmetric positive definite.
#[derive(Debug)]
pub struct Quadratic {
    a: Matrix,
    b: Vector,
    x_star: Vector,
    eigen: OnceLock<SymEigen>,
}

impl Clone for Quadratic {
    fn clone(&self) -> Self {
        let eigen = OnceLock::new();
        if let Some(e) = self.eigen.get() {
            let _ = eigen.set(e.clone());
        }
        Self { a: self.a.clone(), b: self.b.clone(), x_star: self.x_star.clone(), eigen }
    }
}

impl Quadratic {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || n == 0 {
            return Err(Error::InvalidInput(format!(
                "quadratic needs a nonempty square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        check_dim("b", b.len(), n)?;
        let asym = (&a - a.transpose()).norm();
        if asym > 1e-12 * a.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidInput(format!(
                "quadratic matrix is not symmetric (‖A − Aᵀ‖ = {asym:.3e})"
            )));
        }
        let x_star = spd_solve(&a, &b).ok_or_else(|| {
            Error::InvalidInput("quadratic matrix is not positive definite".into())
        })?;
        Ok(Self { a, b, x_star, eigen: OnceLock::new() })
    }

    /// `A = Qᵀ diag(eigenvalues) Q`, `b = b_const · 1`.
    pub fn from_spectrum(eigenvalues: &[f64], q: &Matrix, b_const: f64) -> Result<Self> {
        let n = eigenvalues.len();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "rotation must be {n}x{n}, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if (q.transpose() * q - Matrix::identity(n, n)).norm() > 1e-10 {
            return Err(Error::InvalidInput("rotation is not orthogonal".into()));
        }
        let d = Matrix::from_diagonal(&Vector::from_column_slice(eigenvalues));
        let mut a = q.transpose() * d * q;
        // exact symmetry
        a = (&a + a.transpose()) * 0.5;
        Self::new(a, Vector::from_element(n, b_const))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn linear_term(&self) -> &Vector {
        &self.b
    }

    pub fn minimizer(&self) -> &Vector {
        &self.x_star
    }

    /// Eigendecomposition of `A`, computed on first use.
    pub fn eigen(&self) -> &SymEigen {
        self.eigen.get_or_init(|| {
            sym_eigen(&self.a).expect("Jacobi sweeps converge for symmetric matrices")
        })
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn mu(&self) -> f64 {
        self.eigen().values[0]
    }

    fn value(&self, x: &Vector) -> Result<f64> {
        check_dim("x", x.len(), self.dim())?;
        Ok(0.5 * x.dot(&(&self.a * x)) - self.b.dot(x))
    }

    fn gradient(&self, x: &Vector) -> Result<Vector> {
        check_dim("x", x.len(), self.dim())?;
        Ok(&self.a * x - &self.b)
    }

    fn hvp(&self, x: &Vector, p: &Vector) -> Result<Vector> {
        check_dim("x", x.len(), self.dim())?;
        check_dim("p", p.len(), self.dim())?;
        Ok(&self.a * p)
    }

    fn hessian(&self, x: &Vector) -> Result<Matrix> {
        check_dim("x", x.len(), self.dim())?;
        Ok(self.a.clone())
    }

    fn as_quadratic(&self) -> Option<&Quadratic> {
        Some(self)
    }
}

/// Orthogonal matrix from the QR factorization of a seeded Gaussian matrix,
/// column signs fixed so that `R` has a positive diagonal.
pub fn random_orthogonal(n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `log(1 + exp(t))` without overflow.
#[inline]
fn softplus(t: f64) -> f64 {
    (-t.abs()).exp().ln_1p() + t.max(0.0)
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `f(w) = (1/n) Σ log(1 + exp(−yᵢ aᵢᵀ w)) + (λ/2)‖w‖²`.
#[derive(Debug, Clone)]
pub struct RidgeLogistic {
    features: Matrix,
    labels: Vector,
    lambda_reg: f64,
}

impl RidgeLogistic {
    pub fn new(features: Matrix, labels: Vector, lambda_reg: f64) -> Result<Self> {
        check_dim("labels", labels.len(), features.nrows())?;
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::InvalidInput("logistic data must be nonempty".into()));
        }
        if !(lambda_reg > 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda_reg must be positive, got {lambda_reg}"
            )));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidInput("labels must be ±1".into()));
        }
        Ok(Self { features, labels, lambda_reg })
    }

    /// Standard-normal features; labels drawn from the logistic model with
    /// true weights `w_j = (−1)^j (1 + j mod 3) / √d`.
    pub fn synthetic(n_samples: usize, dim: usize, lambda_reg: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features =
            Matrix::from_fn(n_samples, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w_true = Self::true_weights(dim);
        let margins = &features * &w_true;
        let labels = margins.map(|m| if rng.random::<f64>() < sigmoid(m) { 1.0 } else { -1.0 });
        Self::new(features, labels, lambda_reg)
    }

    pub fn true_weights(dim: usize) -> Vector {
        let scale = (dim.max(1) as f64).sqrt();
        Vector::from_fn(dim, |j, _| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1.0 + (j % 3) as f64) / scale
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn lambda_reg(&self) -> f64 {
        self.lambda_reg
    }

    fn margins(&self, w: &Vector) -> Vector {
        (&self.features * w).component_mul(&self.labels)
    }

    /// Diagonal weights `σ(m)(1 − σ(m))` of the data Hessian.
    fn curvature_weights(&self, w: &Vector) -> Vector {
        self.margins(w).map(|m| sigmoid(m) * sigmoid(-m))
    }
}

impl Objective for RidgeLogistic {
    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn mu(&self) -> f64 {
        self.lambda_reg
    }

    fn value(&self, w: &Vector) -> Result<f64> {
        check_dim("w", w.len(), self.dim())?;
        let n = self.n_samples() as f64;
        let loss: f64 = self.margins(w).iter().map(|&m| softplus(-m)).sum();
        Ok(loss / n + 0.5 * self.lambda_reg * w.norm_squared())
    }

    fn gradient(&self, w: &Vector) -> Result<Vector> {
        check_dim("w", w.len(), self.dim())?;
        let n = self.n_samples() as f64;
        // d/dm softplus(−m) = −σ(−m)
        let coef = self
            .margins(w)
            .zip_map(&self.labels, |m, y| -y * sigmoid(-m) / n);
        Ok(self.features.tr_mul(&coef) + w * self.lambda_reg)
    }

    fn hvp(&self, w: &Vector, p: &Vector) -> Result<Vector> {
        check_dim("w", w.len(), self.dim())?;
        check_dim("p", p.len(), self.dim())?;
        let n = self.n_samples() as f64;
        let ap = (&self.features * p).component_mul(&self.curvature_weights(w)) / n;
        Ok(self.features.tr_mul(&ap) + p * self.lambda_reg)
    }

    fn hessian(&self, w: &Vector) -> Result<Matrix> {
        check_dim("w", w.len(), self.dim())?;
        let (n, d) = (self.n_samples(), self.dim());
        let weights = self.curvature_weights(w) / n as f64;
        let mut scaled = self.features.clone();
        for (mut col, _) in scaled.column_iter_mut().zip(0..d) {
            col.component_mul_assign(&weights);
        }
        let mut h = Matrix::from_diagonal_element(d, d, self.lambda_reg);
        // h += Fᵀ · scaled; both operands are column-major n×d
        unsafe {
            matrixmultiply::dgemm(
                d,
                n,
                d,
                1.0,
                self.features.as_ptr(),
                n as isize,
                1,
                scaled.as_ptr(),
                1,
                n as isize,
                1.0,
                h.as_mut_ptr(),
                1,
                d as isize,
            );
        }
        Ok(h)
    }
}

/// Nonconvex log-cosh regression `f(x) = ½‖A u(x) − b‖²` with
/// `uᵢ(x) = log cosh(xᵢ)`.
#[derive(Debug, Clone)]
pub struct LogCosh {
    a: Matrix,
    b: Vector,
    q: Matrix,
    c: Vector,
}

/// `log cosh(t)` computed as `|t| + log1p(e^{−2|t|}) − log 2`.
#[inline]
fn log_cosh(t: f64) -> f64 {
    let t = t.abs();
    t + (-2.0 * t).exp().ln_1p() - std::f64::consts::LN_2
}

impl LogCosh {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        check_dim("b", b.len(), a.nrows())?;
        if a.ncols() == 0 {
            return Err(Error::InvalidInput("log-cosh needs at least one column".into()));
        }
        let q = a.tr_mul(&a);
        let c = a.tr_mul(&b);
        Ok(Self { a, b, q, c })
    }

    /// Sets `b = A u(target)`, so `±target` (all sign patterns) are global
    /// minimizers with value zero.
    pub fn with_target(a: Matrix, target: &Vector) -> Result<Self> {
        check_dim("target", target.len(), a.ncols())?;
        let b = &a * target.map(log_cosh);
        Self::new(a, b)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn rhs(&self) -> &Vector {
        &self.b
    }

    fn u(x: &Vector) -> Vector {
        x.map(log_cosh)
    }
}

impl Objective for LogCosh {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn mu(&self) -> f64 {
        0.0
    }

    fn value(&self, x: &Vector) -> Result<f64> {
        check_dim("x", x.len(), self.dim())?;
        Ok(0.5 * (&self.a * Self::u(x) - &self.b).norm_squared())
    }

    fn gradient(&self, x: &Vector) -> Result<Vector> {
        check_dim("x", x.len(), self.dim())?;
        let r = &self.q * Self::u(x) - &self.c;
        Ok(r.component_mul(&x.map(f64::tanh)))
    }

    /// `H = diag(t) Q diag(t) + diag(r ⊙ sech²x)` with `t = tanh x`,
    /// `r = Q u(x) − c`.
    fn hvp(&self, x: &Vector, p: &Vector) -> Result<Vector> {
        check_dim("x", x.len(), self.dim())?;
        check_dim("p", p.len(), self.dim())?;
        let t = x.map(f64::tanh);
        let r = &self.q * Self::u(x) - &self.c;
        let sech2 = t.map(|ti| 1.0 - ti * ti);
        let tp = t.component_mul(p);
        Ok(t.component_mul(&(&self.q * tp)) + r.component_mul(&sech2).component_mul(p))
    }

    fn hessian(&self, x: &Vector) -> Result<Matrix> {
        check_dim("x", x.len(), self.dim())?;
        let n = self.dim();
        let t = x.map(f64::tanh);
        let r = &self.q * Self::u(x) - &self.c;
        let mut h = Matrix::from_fn(n, n, |i, j| self.q[(i, j)] * t[i] * t[j]);
        for i in 0..n {
            h[(i, i)] += r[i] * (1.0 - t[i] * t[i]);
        }
        Ok(h)
    }
}
