//! Damped Newton maximization shared by the likelihood fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Objective to maximize. `evaluate` returns the value, gradient and Hessian;
/// a non-finite value marks an infeasible point.
pub(crate) trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, theta: &[f64]) -> f64;
    fn evaluate(&self, theta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>);
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Fail with `MonotoneLikelihood` once any coefficient exceeds this.
    pub coef_limit: Option<f64>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iter: 100,
            max_halvings: 30,
            coef_limit: None,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonResult {
    pub theta: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
    /// Hessian at `theta` and at the starting point.
    pub hessian: DMatrix<f64>,
    pub initial_hessian: DMatrix<f64>,
}

/// Solves `(-H) d = g`, regularizing `-H` until it is positive definite.
fn ascent_direction(grad: &DVector<f64>, hess: &DMatrix<f64>) -> DVector<f64> {
    let neg = -hess;
    let scale = neg.diagonal().iter().fold(1e-12f64, |m, v| m.max(v.abs()));
    let mut ridge = 0.0;
    for _ in 0..40 {
        let mut m = neg.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            return ch.solve(grad);
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 10.0 };
    }
    grad.clone() / scale
}

pub(crate) fn maximize<O: Objective>(obj: &O, init: Vec<f64>, opts: NewtonOptions) -> Result<NewtonResult> {
    match maximize_from(obj, init, opts) {
        (r, None) => Ok(r),
        (_, Some(e)) => Err(e),
    }
}

/// Like `maximize`, but a failure to converge still returns the last
/// iterate alongside the error.
pub(crate) fn maximize_from<O: Objective>(
    obj: &O,
    init: Vec<f64>,
    opts: NewtonOptions,
) -> (NewtonResult, Option<Error>) {
    debug_assert_eq!(init.len(), obj.dim());
    let mut theta = init;
    let (mut value, mut grad, mut hess) = obj.evaluate(&theta);
    let initial = hess.clone();
    let done = |theta, value, iterations, trace, hessian| NewtonResult {
        theta,
        value,
        iterations,
        trace,
        hessian,
        initial_hessian: initial.clone(),
    };
    if !value.is_finite() {
        let e = Error::InvalidInput("objective is not finite at the starting point".into());
        return (done(theta, value, 0, vec![], hess), Some(e));
    }
    let mut trace = vec![value];
    for iter in 0..opts.max_iter {
        if grad.amax() < opts.grad_tol {
            return (done(theta, value, iter, trace, hess), None);
        }
        let dir = ascent_direction(&grad, &hess);
        let decrement = grad.dot(&dir);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = theta.iter().zip(dir.iter()).map(|(t, d)| t + step * d).collect();
            let v = obj.value(&cand);
            if v.is_finite() && v >= value {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted else {
            // No ascent left: accept if we are at the optimum to working
            // precision, otherwise report failure.
            let err = (decrement.abs() > 1e-12 * (1.0 + value.abs())).then_some(Error::NonConvergence(iter));
            return (done(theta, value, iter, trace, hess), err);
        };
        if let Some(limit) = opts.coef_limit {
            if next.iter().any(|b| b.abs() > limit) {
                return (done(theta, value, iter, trace, hess), Some(Error::MonotoneLikelihood(limit)));
            }
        }
        let prev = value;
        theta = next;
        (value, grad, hess) = obj.evaluate(&theta);
        trace.push(value);
        if value - prev <= 1e-15 * (1.0 + value.abs()) && decrement.abs() <= 1e-12 * (1.0 + value.abs()) {
            return (done(theta, value, iter + 1, trace, hess), None);
        }
    }
    let err = (grad.amax() >= opts.grad_tol).then_some(Error::NonConvergence(opts.max_iter));
    (done(theta, value, opts.max_iter, trace, hess), err)
}
