//! Candidate conditional survival models fit within one treatment arm.

mod aft;
mod cox;
mod newton;
mod spline;

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

pub use aft::{aft_log_likelihood, fit_aft, AftDistribution, AftFit};
pub use cox::{
    breslow_baseline, cox_partial_log_likelihood, fit_cox, penalized_partial_log_likelihood, BreslowBaseline, CoxFit,
    MONOTONE_LIMIT,
};
pub use spline::{spline_basis, BSplineBasis, SplineExpansion};

use crate::data::{Design, SurvivalSample};
use crate::error::{Error, Result};
use crate::numerics::integrate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Weibull,
    LogNormal,
    CoxLinear,
    CoxSpline,
}

impl Family {
    pub const ALL: [Family; 4] = [Self::Weibull, Self::LogNormal, Self::CoxLinear, Self::CoxSpline];

    pub fn name(self) -> &'static str {
        match self {
            Self::Weibull => "weibull",
            Self::LogNormal => "lognormal",
            Self::CoxLinear => "cox-linear",
            Self::CoxSpline => "cox-spline",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown model family `{s}`")))
    }
}

/// Spline settings for the spline Cox model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineSettings {
    /// Cubic B-spline functions per continuous covariate.
    pub basis_size: usize,
    /// Weight on the second-difference roughness penalty.
    pub penalty: f64,
}

impl Default for SplineSettings {
    fn default() -> Self {
        Self {
            basis_size: 6,
            penalty: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub spline: SplineSettings,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            spline: SplineSettings::default(),
        }
    }

    pub fn spline(basis_size: usize, penalty: f64) -> Result<Self> {
        let spec = Self {
            family: Family::CoxSpline,
            spline: SplineSettings { basis_size, penalty },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The four default candidates.
    pub fn default_set() -> Vec<Self> {
        Family::ALL.into_iter().map(Self::new).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.spline.basis_size < 4 {
            return Err(Error::InvalidInput(format!(
                "spline basis size must be at least 4, got {}",
                self.spline.basis_size
            )));
        }
        if !(self.spline.penalty >= 0.0) || !self.spline.penalty.is_finite() {
            return Err(Error::InvalidInput(format!(
                "spline penalty must be a nonnegative number, got {}",
                self.spline.penalty
            )));
        }
        Ok(())
    }

    /// Fits the candidate to `sample`, usually the records of one arm.
    /// Covariates that are constant in `sample` carry no information there
    /// and are left out of the fit.
    pub fn fit(&self, sample: &SurvivalSample) -> Result<FittedCandidate> {
        self.validate()?;
        let x = sample.covariates();
        let varying: Vec<usize> = (0..x.cols())
            .filter(|&j| x.iter_rows().any(|r| r[j] != x.row(0)[j]))
            .collect();
        let columns = (varying.len() < x.cols()).then_some(varying);
        let reduced;
        let sample = match &columns {
            Some(cols) => {
                reduced = sample.select_covariates(cols);
                &reduced
            }
            None => sample,
        };
        let model = match self.family {
            Family::Weibull => CandidateModel::Aft(fit_aft(AftDistribution::ExtremeValue, sample)?),
            Family::LogNormal => CandidateModel::Aft(fit_aft(AftDistribution::Normal, sample)?),
            Family::CoxLinear => CandidateModel::Cox(fit_cox(sample, sample.covariates())?),
            Family::CoxSpline => {
                let expansion = SplineExpansion::fit(sample.covariates(), self.spline.basis_size)?;
                let design = expansion.expand(sample.covariates());
                let penalty = expansion.penalty(self.spline.penalty);
                let fit = cox::fit_cox_penalized(sample, &design, Some(&penalty))?;
                CandidateModel::SplineCox { expansion, fit }
            }
        };
        let arm = sample.arm().first().copied().filter(|&a| sample.arm().iter().all(|&b| b == a));
        Ok(FittedCandidate {
            family: self.family,
            arm,
            n_covariates: x.cols(),
            columns,
            model,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CandidateModel {
    Aft(AftFit),
    Cox(CoxFit),
    SplineCox { expansion: SplineExpansion, fit: CoxFit },
}

/// A fitted candidate exposing `S(t | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedCandidate {
    pub family: Family,
    /// Arm of the training records, when they all share one.
    pub arm: Option<u8>,
    n_covariates: usize,
    /// Covariates the model uses, when some were constant in training.
    columns: Option<Vec<usize>>,
    pub model: CandidateModel,
}

impl FittedCandidate {
    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    /// Indices of the covariates the model was fit on.
    pub fn used_covariates(&self) -> Vec<usize> {
        self.columns.clone().unwrap_or_else(|| (0..self.n_covariates).collect())
    }

    fn model_input<'a>(&self, x: &'a [f64]) -> Cow<'a, [f64]> {
        match &self.columns {
            Some(cols) => Cow::Owned(cols.iter().map(|&j| x[j]).collect()),
            None => Cow::Borrowed(x),
        }
    }

    /// `S(t | x)` at each of the ascending `times`. `x` must have the
    /// training dimension.
    pub fn survival_on(&self, times: &[f64], x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_covariates);
        let x = &*self.model_input(x);
        match &self.model {
            CandidateModel::Aft(f) => f.survival_on(times, x, out),
            CandidateModel::Cox(f) => f.survival_on(times, x, out),
            CandidateModel::SplineCox { expansion, fit } => {
                let mut z = Vec::with_capacity(expansion.width());
                expansion.expand_row(x, &mut z);
                fit.survival_on(times, &z, out);
            }
        }
    }

    /// Restricted mean `int_0^tau S(t | x) dt`: exact for the step-function
    /// Cox models, adaptive quadrature (absolute tolerance 1e-8) otherwise.
    pub fn restricted_mean(&self, x: &[f64], tau: f64) -> Result<f64> {
        check_dimension(self, x)?;
        if !(tau > 0.0) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
        }
        let x = &*self.model_input(x);
        let (fit, z) = match &self.model {
            CandidateModel::Aft(f) => return Ok(integrate(|t| f.survival(t, x), 0.0, tau, 1e-8)),
            CandidateModel::Cox(fit) => (fit, x.to_vec()),
            CandidateModel::SplineCox { expansion, fit } => {
                let mut z = Vec::new();
                expansion.expand_row(x, &mut z);
                (fit, z)
            }
        };
        let base = &fit.baseline;
        let risk = fit.linear_predictor(&z).exp();
        let mut area = 0.0;
        let mut prev = 0.0;
        let mut s = 1.0;
        for (&t, &h) in base.times.iter().zip(&base.cumulative_hazard) {
            if t >= tau {
                break;
            }
            area += (t - prev) * s;
            prev = t;
            s = (-h * risk).exp();
        }
        Ok(area + (tau - prev) * s)
    }
}

fn check_dimension(fit: &FittedCandidate, x: &[f64]) -> Result<()> {
    if x.len() != fit.n_covariates {
        return Err(Error::DimensionMismatch {
            expected: fit.n_covariates,
            got: x.len(),
        });
    }
    Ok(())
}

/// `S(t | x)` for one fitted candidate, clamped to `[0, 1]`.
pub fn predict_survival(fit: &FittedCandidate, t: f64, x: &[f64]) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    check_dimension(fit, x)?;
    let mut out = [0.0];
    fit.survival_on(&[t], x, &mut out);
    Ok(out[0])
}

/// Anything that predicts `S(t | x)` over an ascending time grid.
pub trait SurvivalPredictor {
    fn n_covariates(&self) -> usize;

    /// Writes `S(t | x)` for each of the ascending `times` into `out`.
    fn survival_on(&self, times: &[f64], x: &[f64], out: &mut [f64]);

    /// Calls `f` with the curve over `times` for each row of `x` in turn.
    fn survival_rows(&self, times: &[f64], x: &Design, f: &mut dyn FnMut(&[f64])) {
        let mut out = vec![0.0; times.len()];
        for row in x.iter_rows() {
            self.survival_on(times, row, &mut out);
            f(&out);
        }
    }
}

impl SurvivalPredictor for FittedCandidate {
    fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    fn survival_on(&self, times: &[f64], x: &[f64], out: &mut [f64]) {
        FittedCandidate::survival_on(self, times, x, out)
    }

    fn survival_rows(&self, times: &[f64], x: &Design, f: &mut dyn FnMut(&[f64])) {
        let mut out = vec![0.0; times.len()];
        if let CandidateModel::Aft(fit) = &self.model {
            // log times are shared by every row
            let log_t: Vec<f64> = times.iter().map(|&t| if t > 0.0 { t.ln() } else { f64::NEG_INFINITY }).collect();
            for row in x.iter_rows() {
                fit.survival_on_log(&log_t, &self.model_input(row), &mut out);
                f(&out);
            }
        } else {
            for row in x.iter_rows() {
                self.survival_on(times, row, &mut out);
                f(&out);
            }
        }
    }
}
