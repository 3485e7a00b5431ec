//! Small damped Gauss-Newton (Levenberg-Marquardt) solver for the few
//! parameter fits in this crate.

use nalgebra::{DMatrix, DVector};

use crate::scalar::{lit, Real};

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome<T> {
    pub params: Vec<T>,
    pub sse: T,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) struct LmProblem<'a, T> {
    /// Residual vector (model - data) at `params`, or `None` if `params` is
    /// outside the admissible region.
    pub residuals: &'a dyn Fn(&[T]) -> Option<Vec<T>>,
    /// Jacobian rows (one per residual).
    pub jacobian: &'a dyn Fn(&[T]) -> Vec<Vec<T>>,
}

/// Converged when an accepted (or rejected but negligible) step changes every
/// parameter by less than `step_tol * (1 + |p|)`.
pub(crate) fn solve<T: Real>(
    problem: &LmProblem<'_, T>,
    start: &[T],
    step_tol: T,
    max_iter: usize,
) -> Option<LmOutcome<T>> {
    let np = start.len();
    let mut p = start.to_vec();
    let r0 = (problem.residuals)(&p)?;
    let mut sse = sum_sq(&r0);
    let mut lambda = lit::<T>(1e-3);
    for iter in 1..=max_iter {
        let r = (problem.residuals)(&p)?;
        let jac = (problem.jacobian)(&p);
        let m = r.len();
        let j = DMatrix::from_fn(m, np, |i, k| jac[i][k]);
        let rv = DVector::from_vec(r);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * rv;
        loop {
            let mut a = jtj.clone();
            for k in 0..np {
                a[(k, k)] += lambda * (jtj[(k, k)] + lit(1e-30));
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= lit(10.0);
                    if lambda > lit(1e20) {
                        return Some(LmOutcome { params: p, sse, iterations: iter, converged: false });
                    }
                    continue;
                }
            };
            let small = (0..np).all(|k| step[k].abs() <= step_tol * (T::one() + p[k].abs()));
            let trial: Vec<T> = (0..np).map(|k| p[k] + step[k]).collect();
            match (problem.residuals)(&trial) {
                Some(rt) if sum_sq(&rt) <= sse => {
                    p = trial;
                    sse = sum_sq(&rt);
                    lambda = (lambda * lit(0.1)).max(lit(1e-12));
                    if small {
                        return Some(LmOutcome { params: p, sse, iterations: iter, converged: true });
                    }
                    break;
                }
                _ => {
                    if small {
                        return Some(LmOutcome { params: p, sse, iterations: iter, converged: true });
                    }
                    lambda *= lit(10.0);
                    if lambda > lit(1e20) {
                        return Some(LmOutcome { params: p, sse, iterations: iter, converged: false });
                    }
                }
            }
        }
    }
    Some(LmOutcome {
        params: p,
        sse,
        iterations: max_iter,
        converged: false,
    })
}

pub(crate) fn sum_sq<T: Real>(r: &[T]) -> T {
    r.iter().fold(T::zero(), |a, v| a + *v * *v)
}
