//! Damped Newton iteration for small dense square systems.

use nalgebra::{Const, DimMin, SMatrix, SVector};

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Largest allowed max-norm step; longer steps are scaled down.
    pub max_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-12,
            max_iter: 100,
            max_step: 0.5,
        }
    }
}

/// Solve `f(x) = 0` from `x0`. `f` returns the residual and its Jacobian, or
/// `None` when `x` lies outside the admissible domain. Backtracking halves the
/// step until the residual max-norm decreases. Returns the converged point.
pub fn solve<const N: usize, F>(
    f: F,
    x0: SVector<f64, N>,
    opts: &NewtonOptions,
) -> Option<SVector<f64, N>>
where
    F: Fn(&SVector<f64, N>) -> Option<(SVector<f64, N>, SMatrix<f64, N, N>)>,
    Const<N>: DimMin<Const<N>, Output = Const<N>>,
{
    let mut x = x0;
    let (mut r, mut jac) = f(&x)?;
    let mut norm = r.amax();
    for _ in 0..opts.max_iter {
        if !norm.is_finite() {
            return None;
        }
        if norm <= opts.tol {
            return Some(x);
        }
        let mut dx = jac.lu().solve(&(-r))?;
        let len = dx.amax();
        if !len.is_finite() {
            return None;
        }
        if len > opts.max_step {
            dx *= opts.max_step / len;
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = x + dx * lambda;
            if let Some((rt, jt)) = f(&trial) {
                let nt = rt.amax();
                if nt.is_finite() && nt < norm {
                    x = trial;
                    r = rt;
                    jac = jt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return if norm <= opts.tol { Some(x) } else { None };
        }
    }
    (norm <= opts.tol).then_some(x)
}
