//! Evaluation measures across simulation replications: relative bias, MSE
//! and interval ratios against a reference estimator, coverage, integrated
//! squared survival error (ISSE), and the empirical check of the bound
//! `MSE[gamma_hat] <= tau * (ISSE_0 + ISSE_1)`.

use serde::{Deserialize, Serialize};

use crate::data::Design;
use crate::error::{Error, Result};
use crate::models::SurvivalPredictor;
use crate::simgen::Scenario;

/// Default number of points of the ISSE trapezoid grid.
pub const ISSE_GRID: usize = 201;

/// One estimator's outcome on one replication at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub scenario: u8,
    pub tau: f64,
    /// True effect of the cell, carried so record files summarize on their own.
    pub truth: f64,
    pub estimator: String,
    pub replication: u64,
    pub gamma_hat: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// False when the estimator failed; the numeric fields are then NaN.
    pub ok: bool,
    pub isse0: f64,
    pub isse1: f64,
}

impl ReplicationRecord {
    pub fn failed(scenario: u8, tau: f64, truth: f64, estimator: &str, replication: u64) -> Self {
        Self {
            scenario,
            tau,
            truth,
            estimator: estimator.to_string(),
            replication,
            gamma_hat: f64::NAN,
            ci_lower: f64::NAN,
            ci_upper: f64::NAN,
            ok: false,
            isse0: f64::NAN,
            isse1: f64::NAN,
        }
    }

    pub fn covers(&self, gamma: f64) -> bool {
        self.ci_lower <= gamma && gamma <= self.ci_upper
    }
}

/// Evenly spaced grid of `size` points on `[0, tau]`.
pub fn isse_times(tau: f64, size: usize) -> Vec<f64> {
    let step = tau / (size - 1) as f64;
    (0..size).map(|j| if j + 1 == size { tau } else { j as f64 * step }).collect()
}

/// True conditional survival of both arms on an ISSE grid, one row per
/// subject. Shared by every estimator scored on the same replication.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthGrid {
    pub times: Vec<f64>,
    /// `values[a][i * times.len() + j]`
    pub values: [Vec<f64>; 2],
}

impl TruthGrid {
    pub fn new(scenario: &Scenario, x: &Design, tau: f64, size: usize) -> Result<Self> {
        let times = check_grid(tau, size)?;
        let values = [0u8, 1].map(|a| {
            x.iter_rows()
                .flat_map(|row| times.iter().map(move |&t| scenario.true_survival(a, row, t)))
                .collect()
        });
        Ok(Self { times, values })
    }

    /// Grid from arbitrary curves, for tests and external truths.
    pub fn from_fn(x: &Design, tau: f64, size: usize, f: impl Fn(u8, &[f64], f64) -> f64) -> Result<Self> {
        let times = check_grid(tau, size)?;
        let values = [0u8, 1].map(|a| {
            x.iter_rows()
                .flat_map(|row| times.iter().map(|&t| f(a, row, t)).collect::<Vec<_>>())
                .collect()
        });
        Ok(Self { times, values })
    }
}

fn check_grid(tau: f64, size: usize) -> Result<Vec<f64>> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
    }
    if size < 2 {
        return Err(Error::InvalidInput(format!("ISSE grid needs at least 2 points, got {size}")));
    }
    Ok(isse_times(tau, size))
}

/// Per-arm `mean_i int_0^tau (S_hat(t | x_i) - S(t | x_i))^2 dt` by the
/// trapezoid rule on the truth grid. Averaging the pair gives the ISSE.
pub fn isse_components(
    fits: [&dyn SurvivalPredictor; 2],
    x: &Design,
    truth: &TruthGrid,
) -> Result<(f64, f64)> {
    let g = truth.times.len();
    if truth.values.iter().any(|v| v.len() != x.rows() * g) {
        return Err(Error::DimensionMismatch {
            expected: x.rows() * g,
            got: truth.values[0].len(),
        });
    }
    let mut out = [0.0; 2];
    for (a, fit) in fits.into_iter().enumerate() {
        if fit.n_covariates() != x.cols() {
            return Err(Error::DimensionMismatch {
                expected: fit.n_covariates(),
                got: x.cols(),
            });
        }
        let mut total = 0.0;
        let mut i = 0;
        fit.survival_rows(&truth.times, x, &mut |s| {
            let s_true = &truth.values[a][i * g..(i + 1) * g];
            let sq: Vec<f64> = s.iter().zip(s_true).map(|(e, t)| (e - t) * (e - t)).collect();
            total += trapezoid(&truth.times, &sq);
            i += 1;
        });
        out[a] = total / x.rows().max(1) as f64;
    }
    Ok((out[0], out[1]))
}

fn trapezoid(t: &[f64], f: &[f64]) -> f64 {
    t.windows(2).zip(f.windows(2)).map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1])).sum()
}

/// One estimator's row of the summary table for a scenario and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: u8,
    pub tau: f64,
    pub estimator: String,
    /// `100 * bias / truth`; NaN when the truth is zero, see `abs_bias_only`.
    pub rel_bias_pct: f64,
    pub mse_ratio: f64,
    pub acl_ratio: f64,
    pub coverage: f64,
    pub isse_ratio: f64,
    pub bound_mse: f64,
    pub isse_bound: f64,
    pub bound_ok: bool,
    pub truth: f64,
    pub replications: usize,
    pub failures: usize,
    pub mean_gamma: f64,
    pub bias: f64,
    pub abs_bias_only: bool,
    pub variance: f64,
    pub mse: f64,
    pub acl: f64,
    pub isse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub mse: f64,
    pub bound: f64,
    /// `mse / bound`
    pub ratio: f64,
    /// Relative Monte Carlo standard error of `mse - bound`, scaled by the bound.
    pub rel_se: f64,
    pub pass: bool,
}

/// Empirical bound check over one estimator's successful records at one
/// horizon. Passes when `mse <= bound * (1 + 3 * rel_se)`.
pub fn isse_bound_check(records: &[&ReplicationRecord], gamma: f64, tau: f64) -> BoundReport {
    let ok: Vec<_> = records.iter().filter(|r| r.ok).collect();
    let n = ok.len() as f64;
    if ok.is_empty() {
        return BoundReport {
            mse: f64::NAN,
            bound: f64::NAN,
            ratio: f64::NAN,
            rel_se: f64::NAN,
            pass: false,
        };
    }
    // per-replication contributions to mse and bound
    let d: Vec<f64> = ok
        .iter()
        .map(|r| (r.gamma_hat - gamma).powi(2) - tau * (r.isse0 + r.isse1))
        .collect();
    let mse = ok.iter().map(|r| (r.gamma_hat - gamma).powi(2)).sum::<f64>() / n;
    let bound = tau * ok.iter().map(|r| r.isse0 + r.isse1).sum::<f64>() / n;
    let mean_d = d.iter().sum::<f64>() / n;
    let sd = if ok.len() > 1 {
        (d.iter().map(|v| (v - mean_d).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let rel_se = if bound > 0.0 { sd / n.sqrt() / bound } else { 0.0 };
    BoundReport {
        mse,
        bound,
        ratio: mse / bound,
        rel_se,
        pass: mse <= bound * (1.0 + 3.0 * rel_se),
    }
}

struct Stats {
    n: usize,
    failures: usize,
    mean: f64,
    variance: f64,
    mse: f64,
    acl: f64,
    coverage: f64,
    isse: f64,
}

fn stats(records: &[&ReplicationRecord], gamma: f64) -> Stats {
    let ok: Vec<_> = records.iter().filter(|r| r.ok).collect();
    let n = ok.len() as f64;
    let mean = ok.iter().map(|r| r.gamma_hat).sum::<f64>() / n;
    Stats {
        n: records.len(),
        failures: records.len() - ok.len(),
        mean,
        variance: ok.iter().map(|r| (r.gamma_hat - mean).powi(2)).sum::<f64>() / n,
        mse: ok.iter().map(|r| (r.gamma_hat - gamma).powi(2)).sum::<f64>() / n,
        acl: ok.iter().map(|r| r.ci_upper - r.ci_lower).sum::<f64>() / n,
        coverage: ok.iter().filter(|r| r.covers(gamma)).count() as f64 / n,
        isse: ok.iter().map(|r| 0.5 * (r.isse0 + r.isse1)).sum::<f64>() / n,
    }
}

/// Summary rows, one per estimator in first-seen order, for the records of
/// one scenario and horizon. Ratios divide by the `reference` estimator.
pub fn summarize(records: &[ReplicationRecord], gamma: f64, reference: &str) -> Result<Vec<SummaryRow>> {
    let Some(first) = records.first() else {
        return Err(Error::InvalidInput("no records to summarize".into()));
    };
    let (scenario, tau) = (first.scenario, first.tau);
    if records.iter().any(|r| r.scenario != scenario || r.tau != tau) {
        return Err(Error::InvalidInput("records mix scenarios or horizons".into()));
    }
    let mut names: Vec<&str> = Vec::new();
    for r in records {
        if !names.contains(&r.estimator.as_str()) {
            names.push(&r.estimator);
        }
    }
    let group = |name: &str| records.iter().filter(|r| r.estimator == name).collect::<Vec<_>>();
    let counts: Vec<usize> = names.iter().map(|n| group(n).len()).collect();
    if counts.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::InvalidInput(format!(
            "estimators have different replication counts in scenario {scenario}, tau {tau}"
        )));
    }
    if !names.contains(&reference) {
        return Err(Error::InvalidInput(format!("reference estimator `{reference}` has no records")));
    }
    let base = stats(&group(reference), gamma);
    Ok(names
        .iter()
        .map(|&name| {
            let recs = group(name);
            let s = stats(&recs, gamma);
            let bias = s.mean - gamma;
            let thm = isse_bound_check(&recs, gamma, tau);
            SummaryRow {
                scenario,
                tau,
                estimator: name.to_string(),
                truth: gamma,
                replications: s.n,
                failures: s.failures,
                mean_gamma: s.mean,
                bias,
                rel_bias_pct: if gamma == 0.0 { f64::NAN } else { 100.0 * bias / gamma },
                abs_bias_only: gamma == 0.0,
                variance: s.variance,
                mse: s.mse,
                mse_ratio: s.mse / base.mse,
                acl: s.acl,
                acl_ratio: s.acl / base.acl,
                coverage: s.coverage,
                isse: s.isse,
                isse_ratio: s.isse / base.isse,
                bound_mse: thm.mse,
                isse_bound: thm.bound,
                bound_ok: thm.pass,
            }
        })
        .collect())
}

/// Spearman rank correlation, ties given their average rank.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    pearson(&ranks(a), &ranks(b))
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let avg = (start + end - 1) as f64 / 2.0 + 1.0;
        for &i in &idx[start..end] {
            r[i] = avg;
        }
        start = end;
    }
    r
}
