//! Monte Carlo study: seeded replications of each scenario, point fits and
//! bootstrap intervals for every estimator, ISSE against the known truth, and
//! per-cell summaries.
//!
//! Replication `r` of scenario `b` depends only on `(seed, b, r)`, so output
//! is identical for any worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{isse_components, spearman, summarize, ReplicationRecord, SummaryRow, TruthGrid, ISSE_GRID};
use crate::models::Family;
use crate::rmst::{bootstrap_effect, EffectConfig, Estimator, EventGrid};
use crate::rng::{derive, ORACLE, REPLICATION};
use crate::simgen::{generate_replication, true_effect_oracle, Scenario};
use crate::stacking::StackConfig;

/// Estimators compared in the study, the reference first.
pub const STUDY_ESTIMATORS: [Estimator; 3] = [
    Estimator::Candidate(Family::CoxLinear),
    Estimator::Candidate(Family::CoxSpline),
    Estimator::Stacked,
];

/// Reference estimator for the summary ratios.
pub const REFERENCE: &str = "cox-linear";

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub scenarios: Vec<u8>,
    pub n: usize,
    pub n_sim: usize,
    /// Index of the first replication; shards of one study use disjoint ranges.
    pub first_replication: u64,
    pub taus: Vec<f64>,
    pub bootstrap: usize,
    pub stack: StackConfig,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
    /// Worker threads; 0 means the available parallelism.
    pub workers: usize,
    pub isse_grid: usize,
    /// Covariate draws for the truth oracle.
    pub oracle_draws: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![1, 2, 3, 4],
            n: 300,
            n_sim: 1000,
            first_replication: 0,
            taus: vec![20.0, 50.0],
            bootstrap: 300,
            stack: StackConfig::default(),
            estimators: STUDY_ESTIMATORS.to_vec(),
            seed: 1,
            workers: 0,
            isse_grid: ISSE_GRID,
            oracle_draws: 1_000_000,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.scenarios.is_empty() {
            return bad("no scenarios selected".into());
        }
        for &b in &self.scenarios {
            Scenario::new(b)?;
        }
        if self.n < 2 {
            return bad(format!("sample size must be at least 2, got {}", self.n));
        }
        if self.n_sim < 1 {
            return bad("n_sim must be at least 1".into());
        }
        if self.bootstrap < 2 {
            return bad(format!("need at least 2 bootstrap replicates, got {}", self.bootstrap));
        }
        if self.isse_grid < 2 {
            return bad("ISSE grid needs at least 2 points".into());
        }
        if self.oracle_draws < 2 {
            return bad("oracle needs at least 2 draws".into());
        }
        if !self.estimators.iter().any(|e| e.name() == REFERENCE) {
            return bad(format!("the reference estimator `{REFERENCE}` must be included"));
        }
        self.effect_config().validate()
    }

    pub fn effect_config(&self) -> EffectConfig {
        EffectConfig {
            stack: self.stack.clone(),
            taus: self.taus.clone(),
            grid: EventGrid::Pooled,
            estimators: self.estimators.clone(),
        }
    }
}

/// Monte Carlo truth for one scenario and horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthValue {
    pub scenario: u8,
    pub tau: f64,
    pub gamma: f64,
    pub se: f64,
}

/// Truth values of every configured scenario and horizon.
pub fn compute_truths(config: &SimulationConfig) -> Result<Vec<TruthValue>> {
    let mut out = Vec::new();
    for &b in &config.scenarios {
        let s = Scenario::new(b)?;
        let seed = derive(config.seed, &[ORACLE]);
        for v in true_effect_oracle(&s, &config.taus, config.oracle_draws, seed)? {
            out.push(TruthValue {
                scenario: b,
                tau: v.tau,
                gamma: v.gamma,
                se: v.se,
            });
        }
    }
    Ok(out)
}

/// Records of one replication: every horizon, then every estimator.
/// `truths` holds the true effect at each configured horizon.
pub fn run_replication(scenario: &Scenario, config: &SimulationConfig, truths: &[f64], rep: u64) -> Vec<ReplicationRecord> {
    let failed_all = || {
        config
            .taus
            .iter()
            .zip(truths)
            .flat_map(|(&tau, &g)| {
                config
                    .estimators
                    .iter()
                    .map(move |e| ReplicationRecord::failed(scenario.id, tau, g, e.name(), rep))
            })
            .collect()
    };
    let Ok(sample) = generate_replication(scenario, config.n, config.seed, rep) else {
        return failed_all();
    };
    let seed = derive(config.seed, &[REPLICATION, scenario.id as u64, rep]);
    let Ok(analysis) = bootstrap_effect(&sample, &config.effect_config(), config.bootstrap, seed) else {
        return failed_all();
    };
    let x = sample.covariates();
    let mut out = Vec::new();
    for (j, (&tau, &gamma)) in config.taus.iter().zip(truths).enumerate() {
        let truth = TruthGrid::new(scenario, x, tau, config.isse_grid).ok();
        for &e in &config.estimators {
            let est = analysis.estimate(e, j);
            let fits = (analysis.point.predictor(e, 0), analysis.point.predictor(e, 1));
            let isse = match (&truth, fits) {
                (Some(t), (Some(f0), Some(f1))) => isse_components([f0, f1], x, t).ok(),
                _ => None,
            };
            out.push(match (est, isse) {
                (Some(est), Some((isse0, isse1))) => ReplicationRecord {
                    scenario: scenario.id,
                    tau,
                    truth: gamma,
                    estimator: e.name().to_string(),
                    replication: rep,
                    gamma_hat: est.gamma,
                    ci_lower: est.ci_lower,
                    ci_upper: est.ci_upper,
                    ok: true,
                    isse0,
                    isse1,
                },
                _ => ReplicationRecord::failed(scenario.id, tau, gamma, e.name(), rep),
            });
        }
    }
    out
}

fn truth_of(truths: &[TruthValue], scenario: u8, tau: f64) -> Result<f64> {
    truths
        .iter()
        .find(|t| t.scenario == scenario && t.tau == tau)
        .map(|t| t.gamma)
        .ok_or_else(|| Error::InvalidInput(format!("no truth value for scenario {scenario}, tau {tau}")))
}

/// All replication records, ordered by scenario, replication, horizon and
/// estimator. `progress` is called with the count of finished replications.
pub fn run_records(
    config: &SimulationConfig,
    truths: &[TruthValue],
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<Vec<ReplicationRecord>> {
    config.validate()?;
    let scenarios: Vec<Scenario> = config.scenarios.iter().map(|&b| Scenario::new(b)).collect::<Result<_>>()?;
    let cell_truths: Vec<Vec<f64>> = config
        .scenarios
        .iter()
        .map(|&b| config.taus.iter().map(|&t| truth_of(truths, b, t)).collect())
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, u64)> = (0..scenarios.len())
        .flat_map(|s| (0..config.n_sim as u64).map(move |r| (s, config.first_replication + r)))
        .collect();
    let total = tasks.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start workers: {e}")))?;
    let per_task: Vec<Vec<ReplicationRecord>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, r)| {
                let recs = run_replication(&scenarios[s], config, &cell_truths[s], r);
                let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                progress(k, total);
                recs
            })
            .collect()
    });
    Ok(per_task.into_iter().flatten().collect())
}

/// Summary rows for every scenario and horizon present in `records`, in
/// first-seen order, against the truth the records carry. Cells whose
/// records disagree on the truth are an error.
pub fn summarize_records(records: &[ReplicationRecord]) -> Result<Vec<SummaryRow>> {
    let mut cells: Vec<(u8, f64)> = Vec::new();
    for r in records {
        if !cells.iter().any(|&(b, t)| b == r.scenario && t == r.tau) {
            cells.push((r.scenario, r.tau));
        }
    }
    let mut rows = Vec::new();
    for (b, tau) in cells {
        let recs: Vec<ReplicationRecord> = records
            .iter()
            .filter(|r| r.scenario == b && r.tau == tau)
            .cloned()
            .collect();
        let truth = recs[0].truth;
        if recs.iter().any(|r| r.truth.to_bits() != truth.to_bits()) {
            return Err(Error::InvalidInput(format!(
                "records of scenario {b}, tau {tau} disagree on the true effect"
            )));
        }
        rows.extend(summarize(&recs, truth, REFERENCE)?);
    }
    Ok(rows)
}

/// Rank correlations of the ISSE with the MSE and with the absolute bias,
/// one point per scenario, horizon and estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsseAssociation {
    pub cells: usize,
    pub rho_mse: f64,
    pub rho_abs_bias: f64,
}

pub fn isse_association(summary: &[SummaryRow]) -> IsseAssociation {
    let rows: Vec<_> = summary.iter().filter(|r| r.isse.is_finite() && r.mse.is_finite()).collect();
    let isse: Vec<f64> = rows.iter().map(|r| r.isse).collect();
    let mse: Vec<f64> = rows.iter().map(|r| r.mse).collect();
    let bias: Vec<f64> = rows.iter().map(|r| r.bias.abs()).collect();
    IsseAssociation {
        cells: rows.len(),
        rho_mse: spearman(&isse, &mse),
        rho_abs_bias: spearman(&isse, &bias),
    }
}

/// Records, truths and summary of a complete study.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub records: Vec<ReplicationRecord>,
    pub truths: Vec<TruthValue>,
    pub summary: Vec<SummaryRow>,
}

/// Runs the study. Truth values are computed unless supplied.
pub fn run_simulation(
    config: &SimulationConfig,
    truths: Option<Vec<TruthValue>>,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<SimulationOutput> {
    config.validate()?;
    let truths = match truths {
        Some(t) => t,
        None => compute_truths(config)?,
    };
    let records = run_records(config, &truths, progress)?;
    let summary = summarize_records(&records)?;
    Ok(SimulationOutput {
        records,
        truths,
        summary,
    })
}
