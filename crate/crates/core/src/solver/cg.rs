use ndarray::{Array2, Zip};

use crate::grid::{dot, norm};

/// Outcome of a (preconditioned) conjugate-gradient solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CgReport {
    pub iterations: usize,
    /// `||rhs - A x|| / ||rhs||` at exit.
    pub rel_residual: f64,
    pub converged: bool,
    /// A search direction with `p'Ap <= 0` was met; the current iterate is returned.
    pub breakdown: bool,
}

/// Conjugate gradients for a symmetric positive definite operator, warm-started
/// from `x0`. `apply_a(x, out)` must write `A x` into `out`.
pub fn cg_solve<A>(
    apply_a: A,
    rhs: &Array2<f64>,
    x0: Array2<f64>,
    max_iters: usize,
    rel_tol: f64,
) -> (Array2<f64>, CgReport)
where
    A: FnMut(&Array2<f64>, &mut Array2<f64>),
{
    pcg_solve(apply_a, None, rhs, x0, max_iters, rel_tol)
}

/// Same as [`cg_solve`] with an optional Jacobi preconditioner given as the
/// elementwise inverse of the operator's diagonal.
pub fn pcg_solve<A>(
    mut apply_a: A,
    inv_diag: Option<&Array2<f64>>,
    rhs: &Array2<f64>,
    x0: Array2<f64>,
    max_iters: usize,
    rel_tol: f64,
) -> (Array2<f64>, CgReport)
where
    A: FnMut(&Array2<f64>, &mut Array2<f64>),
{
    let b_norm = norm(rhs);
    if b_norm == 0.0 {
        let report = CgReport {
            converged: true,
            ..CgReport::default()
        };
        return (Array2::zeros(rhs.raw_dim()), report);
    }

    let mut x = x0;
    let mut ap = Array2::zeros(rhs.raw_dim());
    apply_a(&x, &mut ap);
    let mut r = rhs - &ap;
    let mut rel = norm(&r) / b_norm;
    let mut report = CgReport {
        rel_residual: rel,
        converged: rel <= rel_tol,
        ..CgReport::default()
    };
    if report.converged {
        return (x, report);
    }

    let precondition = |r: &Array2<f64>| match inv_diag {
        Some(d) => r * d,
        None => r.clone(),
    };
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);

    for it in 1..=max_iters {
        apply_a(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0 && curvature.is_finite()) {
            report.breakdown = true;
            break;
        }
        let step = rz / curvature;
        Zip::from(&mut x).and(&p).for_each(|x, &p| *x += step * p);
        Zip::from(&mut r).and(&ap).for_each(|r, &q| *r -= step * q);
        rel = norm(&r) / b_norm;
        report.iterations = it;
        report.rel_residual = rel;
        if rel <= rel_tol {
            report.converged = true;
            break;
        }
        z = precondition(&r);
        let rz_next = dot(&r, &z);
        let ratio = rz_next / rz;
        rz = rz_next;
        Zip::from(&mut p).and(&z).for_each(|p, &z| *p = z + ratio * *p);
    }
    (x, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matvec(a: &Array2<f64>, x: &Array2<f64>, out: &mut Array2<f64>) {
        out.assign(&a.dot(x));
    }

    /// Dense Cholesky solve.
    fn cholesky_solve(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let n = a.nrows();
        let mut l = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| l[[i, k]] * l[[j, k]]).sum();
                if i == j {
                    l[[i, i]] = (a[[i, i]] - s).sqrt();
                } else {
                    l[[i, j]] = (a[[i, j]] - s) / l[[j, j]];
                }
            }
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[[i, k]] * y[k]).sum();
            y[i] = (b[[i, 0]] - s) / l[[i, i]];
        }
        let mut x = Array2::zeros((n, 1));
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| l[[k, i]] * x[[k, 0]]).sum();
            x[[i, 0]] = (y[i] - s) / l[[i, i]];
        }
        x
    }

    #[test]
    fn identity_converges_in_one_step() {
        let rhs = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 - 4.0);
        let (x, rep) = cg_solve(|x, out| out.assign(x), &rhs, Array2::zeros((4, 3)), 10, 1e-12);
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        assert_eq!(x, rhs);
    }

    #[test]
    fn zero_rhs_returns_zero_immediately() {
        let rhs = Array2::zeros((3, 3));
        let x0 = Array2::from_elem((3, 3), 7.0);
        let (x, rep) = cg_solve(|x, out| out.assign(x), &rhs, x0, 10, 1e-12);
        assert_eq!(rep.iterations, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_spd_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50;
        let b = Array2::from_shape_simple_fn((n, n), || rng.random_range(-1.0..1.0));
        let a = b.t().dot(&b) + Array2::<f64>::eye(n);
        let rhs = Array2::from_shape_simple_fn((n, 1), || rng.random_range(-1.0..1.0));
        let exact = cholesky_solve(&a, &rhs);
        let (x, rep) = cg_solve(|x, out| matvec(&a, x, out), &rhs, Array2::zeros((n, 1)), 500, 1e-10);
        assert!(rep.converged, "{rep:?}");
        assert!(norm(&(&x - &exact)) / norm(&exact) < 1e-8);

        let inv_diag = a.diag().mapv(|d| 1.0 / d).into_shape_with_order((n, 1)).unwrap();
        let (xp, rep) = pcg_solve(
            |x, out| matvec(&a, x, out),
            Some(&inv_diag),
            &rhs,
            Array2::zeros((n, 1)),
            500,
            1e-10,
        );
        assert!(rep.converged);
        assert!(norm(&(&xp - &exact)) / norm(&exact) < 1e-8);
    }

    #[test]
    fn warm_start_at_solution_does_no_work() {
        let a = ndarray::array![[4.0, 1.0], [1.0, 3.0]];
        let rhs = ndarray::array![[1.0], [2.0]];
        let exact = cholesky_solve(&a, &rhs);
        let (_, rep) = cg_solve(|x, out| matvec(&a, x, out), &rhs, exact, 10, 1e-12);
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
    }

    #[test]
    fn indefinite_operator_reports_breakdown() {
        let rhs = ndarray::array![[1.0], [1.0]];
        let (_, rep) = cg_solve(|x, out| out.assign(&(-x)), &rhs, Array2::zeros((2, 1)), 10, 1e-12);
        assert!(rep.breakdown);
        assert!(!rep.converged);
    }
}
