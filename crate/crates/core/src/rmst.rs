//! Restricted mean survival times, the treatment effect
//! `gamma(tau) = mu(tau, 1) - mu(tau, 0)`, and percentile bootstrap intervals.
//!
//! `mu(tau, a)` averages a left Riemann sum of `S^(a)(t | x_i)` over every
//! subject's covariates. The sum runs over the ordered event times below
//! `tau`, closed by `tau` itself.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Design, SurvivalSample};
use crate::error::{Error, Result};
use crate::models::{Family, SurvivalPredictor};
use crate::numerics::quantile_sorted;
use crate::rng::{derive, stream, BOOTSTRAP, FOLDS};
use crate::stacking::{fit_stack, StackConfig, StackFit};

/// Which event times form the Riemann grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EventGrid {
    /// Distinct event times of both arms.
    #[default]
    Pooled,
    /// Distinct event times of the arm being integrated.
    PerArm,
}

/// Sorted distinct positive event times of `sample`, optionally restricted
/// to one arm.
pub fn event_time_grid(sample: &SurvivalSample, arm: Option<u8>) -> Vec<f64> {
    let mut t: Vec<f64> = (0..sample.len())
        .filter(|&i| sample.event()[i] && arm.is_none_or(|a| sample.arm()[i] == a))
        .map(|i| sample.time()[i])
        .filter(|&t| t > 0.0)
        .collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::InvalidInput("no tau values".into()));
    }
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidInput(format!("tau must be positive, got {t}")));
    }
    Ok(())
}

/// Marginal restricted means of `predictor` at each `tau`, averaging the
/// left Riemann sum over the rows of `marginal_x`. `event_times` must be
/// ascending; values at or beyond a given `tau` are ignored for it.
pub fn restricted_means<P: SurvivalPredictor + ?Sized>(
    predictor: &P,
    marginal_x: &Design,
    event_times: &[f64],
    taus: &[f64],
) -> Result<Vec<f64>> {
    check_taus(taus)?;
    if marginal_x.rows() == 0 {
        return Err(Error::InvalidInput("no covariate rows to average over".into()));
    }
    if marginal_x.cols() != predictor.n_covariates() {
        return Err(Error::DimensionMismatch {
            expected: predictor.n_covariates(),
            got: marginal_x.cols(),
        });
    }
    if event_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("event times must be sorted".into()));
    }
    let tau_max = taus.iter().copied().fold(0.0, f64::max);
    // nodes[0] = 0, then distinct positive event times below the largest tau
    let mut nodes = vec![0.0];
    for &t in event_times {
        if t > *nodes.last().unwrap() && t < tau_max {
            nodes.push(t);
        }
    }
    // For each tau: the number of nodes strictly below it (node 0 counts).
    let cuts: Vec<usize> = taus.iter().map(|&tau| nodes.partition_point(|&t| t < tau)).collect();

    let mut totals = vec![0.0; taus.len()];
    let mut prefix = vec![0.0; nodes.len()];
    predictor.survival_rows(&nodes, marginal_x, &mut |surv| {
        // prefix[j] = sum_{l < j} (t_{l+1} - t_l) S(t_l)
        for j in 1..nodes.len() {
            prefix[j] = prefix[j - 1] + (nodes[j] - nodes[j - 1]) * surv[j - 1];
        }
        for ((total, &c), &tau) in totals.iter_mut().zip(&cuts).zip(taus) {
            let last = c - 1;
            *total += prefix[last] + (tau - nodes[last]) * surv[last];
        }
    });
    let n = marginal_x.rows() as f64;
    Ok(totals.into_iter().map(|t| t / n).collect())
}

/// `mu(tau, a)` of one stacked fit.
pub fn estimate_restricted_mean(stack: &StackFit, marginal_x: &Design, event_times: &[f64], tau: f64) -> Result<f64> {
    Ok(restricted_means(stack, marginal_x, event_times, &[tau])?[0])
}

/// An estimator of `gamma(tau)`: the stack, or one candidate refit alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    Stacked,
    Candidate(Family),
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Self::Stacked => "stacked",
            Self::Candidate(f) => f.name(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("stacked") {
            Ok(Self::Stacked)
        } else {
            s.parse().map(Self::Candidate)
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectConfig {
    pub stack: StackConfig,
    /// Ascending horizons.
    pub taus: Vec<f64>,
    pub grid: EventGrid,
    /// Estimators to report; candidate means that none of them needs are
    /// skipped.
    pub estimators: Vec<Estimator>,
}

impl EffectConfig {
    pub fn new(taus: Vec<f64>) -> Self {
        let stack = StackConfig::default();
        Self {
            estimators: all_estimators(&stack),
            stack,
            taus,
            grid: EventGrid::Pooled,
        }
    }

    /// Replaces the candidate set, reporting the stack and every candidate.
    pub fn with_stack(mut self, stack: StackConfig) -> Self {
        self.estimators = all_estimators(&stack);
        self.stack = stack;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_taus(&self.taus)?;
        if self.taus.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("tau values must be strictly increasing".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidInput("no estimators to report".into()));
        }
        for e in &self.estimators {
            if let Estimator::Candidate(f) = e {
                if !self.stack.specs.iter().any(|s| s.family == *f) {
                    return Err(Error::InvalidInput(format!("estimator `{f}` is not a candidate")));
                }
            }
        }
        self.stack.validate()
    }
}

/// The stack plus every candidate, in candidate order.
fn all_estimators(stack: &StackConfig) -> Vec<Estimator> {
    std::iter::once(Estimator::Stacked)
        .chain(stack.specs.iter().map(|s| Estimator::Candidate(s.family)))
        .collect()
}

/// Restricted means `mu[arm][tau]` of each estimator; `None` where the
/// estimator could not be formed (its candidate was excluded in an arm).
#[derive(Debug, Clone, PartialEq)]
pub struct MeanTable {
    pub estimators: Vec<Estimator>,
    pub means: Vec<Option<[Vec<f64>; 2]>>,
}

impl MeanTable {
    pub fn index(&self, e: Estimator) -> Option<usize> {
        self.estimators.iter().position(|&x| x == e)
    }

    pub fn mu(&self, e: Estimator, arm: u8, j: usize) -> Option<f64> {
        self.means[self.index(e)?].as_ref().map(|m| m[arm as usize][j])
    }

    pub fn gamma(&self, e: Estimator, j: usize) -> Option<f64> {
        self.means[self.index(e)?].as_ref().map(|m| m[1][j] - m[0][j])
    }
}

/// Point fit of both arms and the restricted means derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectFit {
    pub taus: Vec<f64>,
    pub stacks: [StackFit; 2],
    pub table: MeanTable,
}

impl EffectFit {
    pub fn gamma(&self, e: Estimator, j: usize) -> Option<f64> {
        self.table.gamma(e, j)
    }

    pub fn predictor(&self, e: Estimator, arm: u8) -> Option<&dyn SurvivalPredictor> {
        let stack = &self.stacks[arm as usize];
        match e {
            Estimator::Stacked => Some(stack as &dyn SurvivalPredictor),
            Estimator::Candidate(f) => stack
                .specs
                .iter()
                .position(|s| s.family == f)
                .and_then(|k| stack.candidates[k].as_ref())
                .map(|c| c as &dyn SurvivalPredictor),
        }
    }
}

/// Fits both arms' stacks. Both arms draw their folds from the same stream,
/// so exchanging the arm labels exchanges the fits exactly.
pub fn fit_arms(sample: &SurvivalSample, config: &StackConfig, fold_seed: u64) -> Result<[StackFit; 2]> {
    let rng = stream(fold_seed, &[FOLDS]);
    let s0 = fit_stack(sample, 0, config, &mut rng.clone())?;
    let s1 = fit_stack(sample, 1, config, &mut rng.clone())?;
    Ok([s0, s1])
}

/// Point estimates of every estimator at every `tau`.
pub fn estimate_effect(sample: &SurvivalSample, config: &EffectConfig, fold_seed: u64) -> Result<EffectFit> {
    config.validate()?;
    for a in 0..2u8 {
        if !(0..sample.len()).any(|i| sample.arm()[i] == a && sample.event()[i]) {
            return Err(if sample.arm_indices(a).is_empty() {
                Error::EmptyArm(a)
            } else {
                Error::NoEvents
            });
        }
    }
    let stacks = fit_arms(sample, &config.stack, fold_seed)?;
    let estimators = config.estimators.clone();
    let stacked = estimators.contains(&Estimator::Stacked);
    let mut means = Vec::with_capacity(estimators.len());
    // per candidate and arm
    let mut cand: Vec<[Option<Vec<f64>>; 2]> = vec![[None, None]; config.stack.specs.len()];
    for (a, stack) in stacks.iter().enumerate() {
        let grid = match config.grid {
            EventGrid::Pooled => event_time_grid(sample, None),
            EventGrid::PerArm => event_time_grid(sample, Some(a as u8)),
        };
        for (k, fit) in stack.candidates.iter().enumerate() {
            let needed = (stacked && stack.weights[k] > 0.0)
                || estimators.contains(&Estimator::Candidate(config.stack.specs[k].family));
            if let (true, Some(fit)) = (needed, fit) {
                cand[k][a] = Some(restricted_means(fit, sample.covariates(), &grid, &config.taus)?);
            }
        }
    }
    for e in &estimators {
        let m = match e {
            // Linear in the candidate curves, so the stacked mean is the
            // weighted mean of the candidate means.
            Estimator::Stacked => {
                let arm = |a: usize| {
                    let mut mu = vec![0.0; config.taus.len()];
                    for (k, &alpha) in stacks[a].weights.iter().enumerate() {
                        if alpha > 0.0 {
                            let m = cand[k][a].as_ref().expect("weighted candidates have fits");
                            mu.iter_mut().zip(m).for_each(|(u, v)| *u += alpha * v);
                        }
                    }
                    mu
                };
                Some([arm(0), arm(1)])
            }
            Estimator::Candidate(f) => {
                let k = config.stack.specs.iter().position(|s| s.family == *f).expect("listed");
                match (&cand[k][0], &cand[k][1]) {
                    (Some(m0), Some(m1)) => Some([m0.clone(), m1.clone()]),
                    _ => None,
                }
            }
        };
        means.push(m);
    }
    Ok(EffectFit {
        taus: config.taus.clone(),
        stacks,
        table: MeanTable { estimators, means },
    })
}

/// Outcome of a bootstrap: one entry per replicate (`None` where the
/// estimator failed on that resample) and the number of redraws.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraws<T> {
    pub draws: Vec<Option<T>>,
    pub redraws: usize,
}

/// Runs `estimator` on `replicates` resamples of `sample` drawn with
/// replacement. Resamples without events in either arm are redrawn, up to
/// `10 * replicates` redraws in total. Replicate `b` uses streams derived
/// from `(seed, b)` only, so results do not depend on scheduling.
pub fn bootstrap<T, F>(sample: &SurvivalSample, replicates: usize, seed: u64, estimator: F) -> Result<BootstrapDraws<T>>
where
    T: Send,
    F: Fn(&SurvivalSample, u64) -> Result<T> + Sync,
{
    use rand::Rng;
    if replicates < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 bootstrap replicates, got {replicates}")));
    }
    let n = sample.len();
    let cap = 10 * replicates;
    let results: Vec<(Option<T>, usize)> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            for attempt in 0..=cap {
                let mut rng = stream(seed, &[BOOTSTRAP, b as u64, attempt as u64]);
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let usable = (0..2u8).all(|a| idx.iter().any(|&i| sample.arm()[i] == a && sample.event()[i]));
                if usable {
                    let resample = sample.subset(&idx);
                    let fold_seed = derive(seed, &[BOOTSTRAP, b as u64, attempt as u64, FOLDS]);
                    return (estimator(&resample, fold_seed).ok(), attempt);
                }
            }
            (None, cap + 1)
        })
        .collect();
    let redraws: usize = results.iter().map(|r| r.1).sum();
    if redraws > cap {
        return Err(Error::RedrawCapExceeded(cap));
    }
    Ok(BootstrapDraws {
        draws: results.into_iter().map(|r| r.0).collect(),
        redraws,
    })
}

/// Percentile interval at levels 2.5% and 97.5%.
pub fn percentile_interval(draws: &[f64]) -> Option<(f64, f64)> {
    if draws.len() < 2 {
        return None;
    }
    let mut v = draws.to_vec();
    v.sort_by(f64::total_cmp);
    Some((quantile_sorted(&v, 0.025), quantile_sorted(&v, 0.975)))
}

/// Point estimate and bootstrap interval of one estimator at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectEstimate {
    pub estimator: String,
    pub tau: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub gamma: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Requested bootstrap replicates.
    pub replicates: usize,
    /// Replicates where the estimator failed and which the interval omits.
    pub failed: usize,
    pub redraws: usize,
    #[serde(skip)]
    pub draws: Vec<f64>,
}

/// Point fit plus bootstrap mean tables.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectAnalysis {
    pub point: EffectFit,
    pub boot: BootstrapDraws<MeanTable>,
}

impl EffectAnalysis {
    /// Estimate and percentile interval for `e` at horizon index `j`, if
    /// the point estimate exists and at least two replicates succeeded.
    pub fn estimate(&self, e: Estimator, j: usize) -> Option<EffectEstimate> {
        let t = &self.point.table;
        let gamma = t.gamma(e, j)?;
        let draws: Vec<f64> = self.boot.draws.iter().flatten().filter_map(|m| m.gamma(e, j)).collect();
        let (lo, hi) = percentile_interval(&draws)?;
        Some(EffectEstimate {
            estimator: e.name().to_string(),
            tau: self.point.taus[j],
            mu0: t.mu(e, 0, j)?,
            mu1: t.mu(e, 1, j)?,
            gamma,
            ci_lower: lo,
            ci_upper: hi,
            replicates: self.boot.draws.len(),
            failed: self.boot.draws.len() - draws.len(),
            redraws: self.boot.redraws,
            draws,
        })
    }
}

/// Point estimates plus `replicates` bootstrap refits of the whole
/// pipeline, stacking weights included. `seed` keys both the point fit's
/// folds and every resample.
pub fn bootstrap_effect(
    sample: &SurvivalSample,
    config: &EffectConfig,
    replicates: usize,
    seed: u64,
) -> Result<EffectAnalysis> {
    let point = estimate_effect(sample, config, derive(seed, &[FOLDS]))?;
    let boot = bootstrap(sample, replicates, seed, |s, fold_seed| {
        estimate_effect(s, config, fold_seed).map(|f| f.table)
    })?;
    Ok(EffectAnalysis { point, boot })
}

/// Covariate-averaged survival `S_bar(t) = mean_i S(t | x_i)` at ascending
/// `times`.
pub fn marginal_survival<P: SurvivalPredictor + ?Sized>(predictor: &P, marginal_x: &Design, times: &[f64]) -> Vec<f64> {
    let mut total = vec![0.0; times.len()];
    predictor.survival_rows(times, marginal_x, &mut |s| {
        total.iter_mut().zip(s).for_each(|(t, b)| *t += b);
    });
    let n = marginal_x.rows().max(1) as f64;
    total.into_iter().map(|t| t / n).collect()
}
