//! Accelerated failure time models `log T = b0 + x'b + sigma * eps` fit by
//! maximum likelihood under right censoring.
//!
//! Parameters are packed as `[b0, b1..bp, log sigma]`.

use nalgebra::{DMatrix, DVector};

use super::newton::{maximize, NewtonOptions, Objective};
use crate::data::{Design, SurvivalSample};
use crate::error::{Error, Result};
use crate::numerics::{inverse_mills, normal_log_sf, normal_sf};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Error distribution of the AFT model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AftDistribution {
    /// Standard minimum extreme value: Weibull event times.
    ExtremeValue,
    /// Standard normal: log-normal event times.
    Normal,
}

impl AftDistribution {
    /// `ln f0(w)` for events or `ln S0(w)` for censorings, with its first two
    /// derivatives in `w`.
    fn log_terms(self, w: f64, event: bool) -> (f64, f64, f64) {
        match (self, event) {
            (Self::ExtremeValue, true) => {
                let e = w.exp();
                (w - e, 1.0 - e, -e)
            }
            (Self::ExtremeValue, false) => {
                let e = w.exp();
                (-e, -e, -e)
            }
            (Self::Normal, true) => (-0.5 * w * w - HALF_LN_2PI, -w, -1.0),
            (Self::Normal, false) => {
                let lam = inverse_mills(w);
                (normal_log_sf(w), -lam, -lam * (lam - w))
            }
        }
    }

    /// Standard survival function `S0(w)`.
    pub fn survival(self, w: f64) -> f64 {
        match self {
            Self::ExtremeValue => (-w.exp()).exp(),
            Self::Normal => normal_sf(w),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AftFit {
    pub distribution: AftDistribution,
    /// Intercept followed by one coefficient per covariate.
    pub coefficients: Vec<f64>,
    pub log_scale: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Log-likelihood after each accepted Newton step.
    pub trace: Vec<f64>,
}

impl AftFit {
    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn n_covariates(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Location `b0 + x'b` of `log T` given `x`.
    pub fn location(&self, x: &[f64]) -> f64 {
        self.coefficients[0] + self.coefficients[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn survival(&self, t: f64, x: &[f64]) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        let w = (t.ln() - self.location(x)) / self.scale();
        self.distribution.survival(w).clamp(0.0, 1.0)
    }

    pub fn survival_on(&self, times: &[f64], x: &[f64], out: &mut [f64]) {
        let mu = self.location(x);
        let inv_sigma = 1.0 / self.scale();
        for (o, &t) in out.iter_mut().zip(times) {
            *o = if t <= 0.0 {
                1.0
            } else {
                self.distribution.survival((t.ln() - mu) * inv_sigma).clamp(0.0, 1.0)
            };
        }
    }

    /// `survival_on` given `ln t` (negative infinity for `t = 0`).
    pub fn survival_on_log(&self, log_times: &[f64], x: &[f64], out: &mut [f64]) {
        let mu = self.location(x);
        let inv_sigma = 1.0 / self.scale();
        for (o, &lt) in out.iter_mut().zip(log_times) {
            *o = if lt == f64::NEG_INFINITY {
                1.0
            } else {
                self.distribution.survival((lt - mu) * inv_sigma).clamp(0.0, 1.0)
            };
        }
    }
}

struct AftLikelihood<'a> {
    distribution: AftDistribution,
    log_y: Vec<f64>,
    event: &'a [bool],
    x: &'a Design,
}

impl AftLikelihood<'_> {
    fn location(&self, theta: &[f64], i: usize) -> f64 {
        theta[0] + self.x.row(i).iter().zip(&theta[1..]).map(|(v, b)| v * b).sum::<f64>()
    }
}

impl Objective for AftLikelihood<'_> {
    fn dim(&self) -> usize {
        self.x.cols() + 2
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let s = theta[self.dim() - 1];
        let sigma = s.exp();
        let mut total = 0.0;
        for i in 0..self.log_y.len() {
            let w = (self.log_y[i] - self.location(theta, i)) / sigma;
            let (v, _, _) = self.distribution.log_terms(w, self.event[i]);
            total += v;
            if self.event[i] {
                total -= s + self.log_y[i];
            }
        }
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }

    fn evaluate(&self, theta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = self.dim();
        let p = d - 2;
        let s = theta[d - 1];
        let sigma = s.exp();
        let mut value = 0.0;
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        let mut z = vec![1.0; p + 1];
        for i in 0..self.log_y.len() {
            z[1..].copy_from_slice(self.x.row(i));
            let w = (self.log_y[i] - self.location(theta, i)) / sigma;
            let event = self.event[i];
            let (v, d1, d2) = self.distribution.log_terms(w, event);
            value += v;
            if event {
                value -= s + self.log_y[i];
            }
            // dw/db = -z / sigma, dw/ds = -w
            for a in 0..=p {
                grad[a] -= d1 * z[a] / sigma;
                for b in 0..=a {
                    hess[(a, b)] += d2 * z[a] * z[b] / (sigma * sigma);
                }
                hess[(d - 1, a)] += z[a] * (d2 * w + d1) / sigma;
            }
            grad[d - 1] -= d1 * w + if event { 1.0 } else { 0.0 };
            hess[(d - 1, d - 1)] += d2 * w * w + d1 * w;
        }
        for a in 0..d {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        (value, grad, hess)
    }
}

/// Log of survival times, with zero times moved to half the smallest
/// positive time so the log-likelihood stays finite.
fn log_times(time: &[f64]) -> Vec<f64> {
    let floor = time.iter().copied().filter(|&t| t > 0.0).fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { 0.5 * floor } else { 1.0 };
    time.iter().map(|&t| t.max(floor).ln()).collect()
}

/// Log-likelihood, gradient and Hessian at `theta`, exposed for checking.
pub fn aft_log_likelihood(
    distribution: AftDistribution,
    sample: &SurvivalSample,
    theta: &[f64],
) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let lik = AftLikelihood {
        distribution,
        log_y: log_times(sample.time()),
        event: sample.event(),
        x: sample.covariates(),
    };
    let (v, g, h) = lik.evaluate(theta);
    let h = (0..h.nrows()).map(|r| h.row(r).iter().copied().collect()).collect();
    (v, g.iter().copied().collect(), h)
}

/// Least squares of `log y` on `[1, x]`; falls back to the intercept-only fit
/// when the normal equations are singular.
pub(crate) fn least_squares(log_y: &[f64], x: &Design, rows: &[usize]) -> (Vec<f64>, f64) {
    let p = x.cols();
    let mut xtx = DMatrix::<f64>::zeros(p + 1, p + 1);
    let mut xty = DVector::<f64>::zeros(p + 1);
    let mut z = vec![1.0; p + 1];
    for &i in rows {
        z[1..].copy_from_slice(x.row(i));
        for a in 0..=p {
            xty[a] += z[a] * log_y[i];
            for b in 0..=p {
                xtx[(a, b)] += z[a] * z[b];
            }
        }
    }
    let coef = match (rows.len() > p + 1).then(|| xtx.cholesky()).flatten() {
        Some(ch) => ch.solve(&xty).iter().copied().collect(),
        None => {
            let mean = rows.iter().map(|&i| log_y[i]).sum::<f64>() / rows.len().max(1) as f64;
            let mut c = vec![0.0; p + 1];
            c[0] = mean;
            c
        }
    };
    let rss: f64 = rows
        .iter()
        .map(|&i| {
            let fit = coef[0] + x.row(i).iter().zip(&coef[1..]).map(|(v, b)| v * b).sum::<f64>();
            (log_y[i] - fit).powi(2)
        })
        .sum();
    (coef, rss / rows.len().max(1) as f64)
}

/// Maximum likelihood fit of the AFT model to one arm's records.
pub fn fit_aft(distribution: AftDistribution, sample: &SurvivalSample) -> Result<AftFit> {
    let p = sample.n_covariates();
    if sample.len() < p + 2 {
        return Err(Error::TooFewRecords {
            needed: p + 2,
            got: sample.len(),
        });
    }
    if sample.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    let log_y = log_times(sample.time());
    let events: Vec<usize> = (0..sample.len()).filter(|&i| sample.event()[i]).collect();
    let rows: Vec<usize> = if events.len() >= p + 2 {
        events
    } else {
        (0..sample.len()).collect()
    };
    let (mut init, mse) = least_squares(&log_y, sample.covariates(), &rows);
    init.push(if mse > 1e-12 { 0.5 * mse.ln() } else { 0.0 });

    let lik = AftLikelihood {
        distribution,
        log_y,
        event: sample.event(),
        x: sample.covariates(),
    };
    let r = maximize(&lik, init, NewtonOptions::default())?;
    let log_scale = r.theta[p + 1];
    Ok(AftFit {
        distribution,
        coefficients: r.theta[..=p].to_vec(),
        log_scale,
        log_likelihood: r.value,
        iterations: r.iterations,
        trace: r.trace,
    })
}
