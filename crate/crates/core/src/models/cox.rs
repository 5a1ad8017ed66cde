//! Cox proportional hazards regression: Breslow partial likelihood, Newton
//! iterations with optional quadratic penalty, and the Breslow baseline
//! cumulative hazard.

use nalgebra::{DMatrix, DVector};

use super::newton::{maximize_from, NewtonOptions, NewtonResult, Objective};
use crate::data::{Design, SurvivalSample};
use crate::error::{Error, Result};

/// Coefficient magnitude treated as a diverging (monotone) likelihood.
pub const MONOTONE_LIMIT: f64 = 50.0;

/// Step function `H0(t) = sum_{t_j <= t} d_j / sum_{l at risk} exp(x_l'b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BreslowBaseline {
    pub times: Vec<f64>,
    pub cumulative_hazard: Vec<f64>,
}

impl BreslowBaseline {
    /// Right-continuous evaluation; constant after the last event time.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative_hazard[k - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub coefficients: Vec<f64>,
    pub baseline: BreslowBaseline,
    /// Partial log-likelihood (minus the penalty, when penalized).
    pub objective: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

impl CoxFit {
    pub fn linear_predictor(&self, z: &[f64]) -> f64 {
        self.coefficients.iter().zip(z).map(|(b, v)| b * v).sum()
    }

    pub fn survival(&self, t: f64, z: &[f64]) -> f64 {
        (-self.baseline.at(t) * self.linear_predictor(z).exp()).exp().clamp(0.0, 1.0)
    }

    /// `S(t | z)` over ascending `times`.
    pub fn survival_on(&self, times: &[f64], z: &[f64], out: &mut [f64]) {
        let risk = self.linear_predictor(z).exp();
        let base = &self.baseline;
        let mut k = 0;
        for (o, &t) in out.iter_mut().zip(times) {
            while k < base.times.len() && base.times[k] <= t {
                k += 1;
            }
            let h = if k == 0 { 0.0 } else { base.cumulative_hazard[k - 1] };
            *o = (-h * risk).exp().clamp(0.0, 1.0);
        }
    }
}

pub(crate) struct PartialLikelihood<'a> {
    time: &'a [f64],
    event: &'a [bool],
    x: &'a Design,
    /// Record indices by decreasing time.
    order: Vec<usize>,
    penalty: Option<&'a DMatrix<f64>>,
}

impl<'a> PartialLikelihood<'a> {
    pub(crate) fn new(time: &'a [f64], event: &'a [bool], x: &'a Design, penalty: Option<&'a DMatrix<f64>>) -> Self {
        let mut order: Vec<usize> = (0..time.len()).collect();
        order.sort_by(|&a, &b| time[b].total_cmp(&time[a]));
        Self {
            time,
            event,
            x,
            order,
            penalty,
        }
    }

    fn eta(&self, beta: &[f64]) -> Vec<f64> {
        self.x.iter_rows().map(|r| r.iter().zip(beta).map(|(v, b)| v * b).sum()).collect()
    }

    fn penalty_terms(&self, beta: &[f64]) -> Option<(f64, DVector<f64>)> {
        self.penalty.map(|p| {
            let b = DVector::from_column_slice(beta);
            let pb = p * &b;
            (b.dot(&pb), pb)
        })
    }

    /// Tie groups of records sharing a time, latest first.
    fn groups(&self) -> impl Iterator<Item = &[usize]> {
        self.order.chunk_by(|&a, &b| self.time[a] == self.time[b])
    }
}

impl Objective for PartialLikelihood<'_> {
    fn dim(&self) -> usize {
        self.x.cols()
    }

    fn value(&self, beta: &[f64]) -> f64 {
        let eta = self.eta(beta);
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut ll = 0.0;
        for group in self.groups() {
            let mut d = 0.0;
            for &i in group {
                s0 += (eta[i] - shift).exp();
                if self.event[i] {
                    d += 1.0;
                    ll += eta[i];
                }
            }
            if d > 0.0 {
                ll -= d * (s0.ln() + shift);
            }
        }
        if let Some((pen, _)) = self.penalty_terms(beta) {
            ll -= pen;
        }
        if ll.is_nan() {
            f64::NEG_INFINITY
        } else {
            ll
        }
    }

    fn evaluate(&self, beta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let p = self.dim();
        let n = self.time.len();
        let eta = self.eta(beta);
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();
        // The Hessian is sum_g d_g (S2_g / S0_g - m_g m_g'), m_g = S1_g / S0_g.
        // Swapping sums, the first part is sum_i w_i c_i x_i x_i' where c_i
        // accumulates d_g / S0_g over the risk sets containing record i, so
        // both parts become Gram matrices.
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut ll = 0.0;
        let mut grad = DVector::zeros(p);
        let mut means = Vec::new();
        // sum of d_g / S0_g over the groups later than each group
        let mut later = Vec::new();
        let mut cum = 0.0;
        for group in self.groups() {
            later.push(cum);
            let mut d = 0.0;
            for &i in group {
                let xi = self.x.row(i);
                s0 += w[i];
                s1.iter_mut().zip(xi).for_each(|(s, v)| *s += w[i] * v);
                if self.event[i] {
                    d += 1.0;
                    ll += eta[i];
                    grad.iter_mut().zip(xi).for_each(|(g, v)| *g += v);
                }
            }
            if d > 0.0 {
                ll -= d * (s0.ln() + shift);
                let root = d.sqrt();
                for (a, s) in s1.iter().enumerate() {
                    grad[a] -= d * s / s0;
                }
                means.extend(s1.iter().map(|s| root * s / s0));
                cum += d / s0;
            }
        }
        // Columns of `at` are the scaled rows; products go through gemm.
        let mut at = DMatrix::zeros(p, n);
        for (group, &after) in self.groups().zip(&later) {
            let c = cum - after;
            for &i in group {
                let r = (w[i] * c).sqrt();
                at.column_mut(i).iter_mut().zip(self.x.row(i)).for_each(|(a, v)| *a = r * v);
            }
        }
        let mt = DMatrix::from_column_slice(p, means.len() / p.max(1), &means);
        let mut hess = &mt * mt.transpose() - &at * at.transpose();
        if let (Some(pm), Some((pen, pb))) = (self.penalty, self.penalty_terms(beta)) {
            ll -= pen;
            grad -= 2.0 * pb;
            hess -= 2.0 * pm;
        }
        (ll, grad, hess)
    }
}

/// Breslow partial log-likelihood with its gradient and Hessian at `beta`.
pub fn cox_partial_log_likelihood(
    time: &[f64],
    event: &[bool],
    x: &Design,
    beta: &[f64],
) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let (v, g, h) = PartialLikelihood::new(time, event, x, None).evaluate(beta);
    let h = (0..h.nrows()).map(|r| h.row(r).iter().copied().collect()).collect();
    (v, g.iter().copied().collect(), h)
}

/// Penalized objective `l(b) - b' P b` with its gradient and Hessian.
pub fn penalized_partial_log_likelihood(
    time: &[f64],
    event: &[bool],
    x: &Design,
    penalty: &DMatrix<f64>,
    beta: &[f64],
) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let (v, g, h) = PartialLikelihood::new(time, event, x, Some(penalty)).evaluate(beta);
    let h = (0..h.nrows()).map(|r| h.row(r).iter().copied().collect()).collect();
    (v, g.iter().copied().collect(), h)
}

/// Breslow estimate of the baseline cumulative hazard at coefficients `beta`.
pub fn breslow_baseline(time: &[f64], event: &[bool], x: &Design, beta: &[f64]) -> BreslowBaseline {
    let lik = PartialLikelihood::new(time, event, x, None);
    let eta = lik.eta(beta);
    let mut s0 = 0.0;
    let mut increments = Vec::new();
    for group in lik.groups() {
        let mut d = 0.0;
        for &i in group {
            s0 += eta[i].exp();
            if event[i] {
                d += 1.0;
            }
        }
        if d > 0.0 {
            increments.push((time[group[0]], d / s0));
        }
    }
    increments.reverse();
    let mut total = 0.0;
    let (times, cumulative_hazard) = increments
        .into_iter()
        .map(|(t, inc)| {
            total += inc;
            (t, total)
        })
        .unzip();
    BreslowBaseline {
        times,
        cumulative_hazard,
    }
}

fn check_design(sample: &SurvivalSample, design: &Design) -> Result<()> {
    if design.rows() != sample.len() {
        return Err(Error::DimensionMismatch {
            expected: sample.len(),
            got: design.rows(),
        });
    }
    if sample.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    for j in 0..design.cols() {
        let (lo, hi) = design
            .iter_rows()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])));
        if !(hi > lo) {
            return Err(Error::ConstantColumn(j));
        }
    }
    Ok(())
}

/// True when the information at the optimum, scaled by the unpenalized
/// information at zero, is numerically singular.
fn information_collapsed(r: &NewtonResult, penalty: Option<&DMatrix<f64>>) -> bool {
    // remove the penalty to get the plain information at zero
    let mut null_diag = -r.initial_hessian.diagonal();
    if let Some(pm) = penalty {
        null_diag -= 2.0 * pm.diagonal();
    }
    let scale = DMatrix::from_diagonal(&null_diag.map(|v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt()));
    let info = -&scale * &r.hessian * &scale;
    info.symmetric_eigenvalues().min() < 1e-7
}

/// Penalized fit maximizing `l(b) - b' P b`.
pub(crate) fn fit_cox_penalized(
    sample: &SurvivalSample,
    design: &Design,
    penalty: Option<&DMatrix<f64>>,
) -> Result<CoxFit> {
    check_design(sample, design)?;
    let lik = PartialLikelihood::new(sample.time(), sample.event(), design, penalty);
    let (coefficients, objective, iterations, trace) = if design.cols() == 0 {
        let v = lik.value(&[]);
        (Vec::new(), v, 0, vec![v])
    } else {
        let opts = NewtonOptions {
            coef_limit: Some(MONOTONE_LIMIT),
            ..Default::default()
        };
        let (r, err) = maximize_from(&lik, vec![0.0; design.cols()], opts);
        // Under separation the gradient decays like exp(-|b|), so the
        // iterations can stop, or stall in rounding, before the coefficient
        // limit is reached. The information matrix collapses at the same
        // rate; compare it with the unpenalized information at zero, which
        // fixes the scale of each column.
        match err {
            None | Some(Error::NonConvergence(_)) => {
                if information_collapsed(&r, penalty) {
                    let b = r.theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    return Err(Error::MonotoneLikelihood(b));
                }
                if let Some(e) = err {
                    return Err(e);
                }
            }
            Some(e) => return Err(e),
        }
        (r.theta, r.value, r.iterations, r.trace)
    };
    let baseline = breslow_baseline(sample.time(), sample.event(), design, &coefficients);
    Ok(CoxFit {
        coefficients,
        baseline,
        objective,
        iterations,
        trace,
    })
}

/// Unpenalized Cox fit of `sample` on `design` (one row per record).
pub fn fit_cox(sample: &SurvivalSample, design: &Design) -> Result<CoxFit> {
    fit_cox_penalized(sample, design, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (SurvivalSample, Design) {
        let x = Design::new(3, 1, vec![1.0, 0.0, 1.0]).unwrap();
        let s = SurvivalSample::from_columns(vec![1.0, 2.0, 3.0], vec![true, true, false], vec![0; 3], x.clone()).unwrap();
        (s, x)
    }

    #[test]
    fn score_at_zero_by_hand() {
        // (1 - 2/3) + (0 - 1/2) = -1/6
        let (s, x) = toy();
        let (_, g, _) = cox_partial_log_likelihood(s.time(), s.event(), &x, &[0.0]);
        assert!((g[0] + 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn zero_coefficients_give_nelson_aalen() {
        let x = Design::new(5, 1, vec![0.3, -1.0, 2.0, 0.5, 0.1]).unwrap();
        let time = [2.0, 1.0, 2.0, 4.0, 3.0];
        let event = [true, true, false, true, false];
        let b = breslow_baseline(&time, &event, &x, &[0.0]);
        assert_eq!(b.times, vec![1.0, 2.0, 4.0]);
        let expected = [1.0 / 5.0, 1.0 / 5.0 + 1.0 / 4.0, 1.0 / 5.0 + 1.0 / 4.0 + 1.0];
        for (h, e) in b.cumulative_hazard.iter().zip(expected) {
            assert_eq!(*h, e);
        }
        assert_eq!(b.at(0.5), 0.0);
        assert_eq!(b.at(100.0), expected[2]);
    }

    #[test]
    fn rejects_constant_columns_and_no_events() {
        let x = Design::new(3, 1, vec![1.0, 1.0, 1.0]).unwrap();
        let s = SurvivalSample::from_columns(vec![1.0, 2.0, 3.0], vec![true; 3], vec![0; 3], x.clone()).unwrap();
        assert!(matches!(fit_cox(&s, &x), Err(Error::ConstantColumn(0))));
        let x = Design::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let s = SurvivalSample::from_columns(vec![1.0, 2.0, 3.0], vec![false; 3], vec![0; 3], x.clone()).unwrap();
        assert!(matches!(fit_cox(&s, &x), Err(Error::NoEvents)));
    }

    #[test]
    fn separated_data_is_flagged() {
        // Larger x always fails first: the partial likelihood is monotone.
        let x = Design::new(6, 1, vec![6.0, 5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
        let s = SurvivalSample::from_columns((1..=6).map(f64::from).collect(), vec![true; 6], vec![0; 6], x.clone())
            .unwrap();
        let r = fit_cox(&s, &x);
        assert!(matches!(r, Err(Error::MonotoneLikelihood(_))), "{r:?}");
    }

    #[test]
    fn survival_extends_flat_after_last_event() {
        let (s, x) = toy();
        let fit = fit_cox(&s, &x).unwrap();
        let last = *fit.baseline.times.last().unwrap();
        let z = [1.0];
        assert_eq!(fit.survival(last, &z), fit.survival(last + 100.0, &z));
        let mut out = [0.0; 3];
        fit.survival_on(&[0.0, last, last + 100.0], &z, &mut out);
        assert_eq!(out[0], 1.0);
        assert_eq!(out[1], out[2]);
    }
}
