use ironfi::linalg::{Matrix, Vector};
use ironfi::objectives::{random_orthogonal, LogCosh, Quadratic, RidgeLogistic};
use ironfi::Objective;
use proptest::prelude::*;

fn vec_strategy(n: usize, scale: f64) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-scale..scale, n).prop_map(Vector::from_vec)
}

fn spectrum_quad(seed: u64, eigs: &[f64]) -> Quadratic {
    Quadratic::from_spectrum(eigs, &random_orthogonal(eigs.len(), seed), 0.5).unwrap()
}

fn logcosh(seed: u64) -> LogCosh {
    let q = random_orthogonal(3, seed);
    let a = Matrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.5, 0.3, 0.0, 0.3, 1.0]) * q;
    LogCosh::with_target(a, &Vector::from_vec(vec![1.5, -1.2, 1.0])).unwrap()
}

/// Central differences with step `h`; error is O(h²) · |f'''|.
fn fd_gradient(obj: &dyn Objective, x: &Vector, h: f64) -> Vector {
    Vector::from_fn(x.len(), |i, _| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        (obj.value(&xp).unwrap() - obj.value(&xm).unwrap()) / (2.0 * h)
    })
}

fn fd_hvp(obj: &dyn Objective, x: &Vector, p: &Vector, h: f64) -> Vector {
    (obj.gradient(&(x + p * h)).unwrap() - obj.gradient(&(x - p * h)).unwrap()) / (2.0 * h)
}

fn rel_err(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradients_match_finite_differences(seed in 0u64..1000, x in vec_strategy(3, 2.0)) {
        let logistic = RidgeLogistic::synthetic(60, 3, 0.1, seed).unwrap();
        let objs: [&dyn Objective; 3] = [&spectrum_quad(seed, &[1.0, 1.0, 3.0]), &logistic, &logcosh(seed)];
        for obj in objs {
            let err = rel_err(&obj.gradient(&x).unwrap(), &fd_gradient(obj, &x, 1e-5));
            prop_assert!(err < 1e-7, "gradient error {err}");
        }
    }

    #[test]
    fn hvps_match_finite_differences(seed in 0u64..1000, x in vec_strategy(3, 2.0), p in vec_strategy(3, 1.0)) {
        let logistic = RidgeLogistic::synthetic(60, 3, 0.1, seed).unwrap();
        let objs: [&dyn Objective; 3] = [&spectrum_quad(seed, &[1.0, 2.0, 5.0]), &logistic, &logcosh(seed)];
        for obj in objs {
            let err = rel_err(&obj.hvp(&x, &p).unwrap(), &fd_hvp(obj, &x, &p, 1e-5));
            prop_assert!(err < 1e-7, "hvp error {err}");
        }
    }

    #[test]
    fn hvp_is_symmetric(seed in 0u64..1000, x in vec_strategy(3, 2.0), p in vec_strategy(3, 1.0), q in vec_strategy(3, 1.0)) {
        let logistic = RidgeLogistic::synthetic(60, 3, 0.1, seed).unwrap();
        let objs: [&dyn Objective; 3] = [&spectrum_quad(seed, &[1.0, 2.0, 5.0]), &logistic, &logcosh(seed)];
        for obj in objs {
            let lhs = q.dot(&obj.hvp(&x, &p).unwrap());
            let rhs = p.dot(&obj.hvp(&x, &q).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn gradients_are_strongly_monotone(seed in 0u64..1000, x in vec_strategy(3, 3.0), y in vec_strategy(3, 3.0)) {
        let logistic = RidgeLogistic::synthetic(60, 3, 0.1, seed).unwrap();
        let objs: [&dyn Objective; 2] = [&spectrum_quad(seed, &[1.0, 2.0, 5.0]), &logistic];
        for obj in objs {
            let d = &x - &y;
            let inner = (obj.gradient(&x).unwrap() - obj.gradient(&y).unwrap()).dot(&d);
            prop_assert!(inner >= obj.mu() * d.norm_squared() * (1.0 - 1e-10) - 1e-14);
        }
    }

    #[test]
    fn logistic_hessian_spectrum_is_bounded_below(seed in 0u64..1000, x in vec_strategy(4, 5.0), p in vec_strategy(4, 1.0)) {
        let logistic = RidgeLogistic::synthetic(40, 4, 0.2, seed).unwrap();
        let curvature = p.dot(&logistic.hvp(&x, &p).unwrap());
        prop_assert!(curvature >= 0.2 * p.norm_squared() * (1.0 - 1e-12));
    }
}

#[test]
fn quadratic_mu_is_smallest_eigenvalue() {
    let q = spectrum_quad(3, &[1.0, 1.0, 3.0]);
    assert!((q.mu() - 1.0).abs() < 1e-12);
    let l = RidgeLogistic::synthetic(50, 5, 0.3, 0).unwrap();
    assert_eq!(l.mu(), 0.3);
}

#[test]
fn logcosh_has_negative_curvature_somewhere() {
    // u'' = sech² > 0 but the outer residual term flips sign below the target
    let l = LogCosh::with_target(Matrix::identity(1, 1), &Vector::from_vec(vec![2.0])).unwrap();
    let h = l.hessian(&Vector::from_vec(vec![0.1])).unwrap();
    assert!(h[(0, 0)] < 0.0);
}
