//! Cross-fitted IPCW Brier-score stacking of candidate survival models.
//!
//! For one arm, every candidate is fit on four fifths of the records and
//! predicts the held-out fifth at a small grid of times. The simplex weights
//! minimize the censoring-weighted squared error between those held-out
//! predictions and the survival indicators `I(y_i > t_r)`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::data::SurvivalSample;
use crate::error::{Error, Result};
use crate::km::{censoring_weight, fit_censoring_km, CensoringCurve, CensoringWeight};
use crate::models::{FittedCandidate, ModelSpec, SurvivalPredictor};
use crate::numerics::quantile_sorted;
use crate::rng::SimRng;

/// Largest number of candidates the exact solver accepts.
pub const MAX_CANDIDATES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct BrierGrid {
    pub times: Vec<f64>,
    /// Set when the arm had fewer than `s` events and the grid is every
    /// distinct event time instead of quantiles.
    pub fallback: bool,
}

/// Empirical quantiles of the arm's event times at levels `r / (s + 1)`,
/// `r = 1..=s`, with duplicates collapsed.
pub fn brier_time_grid(sample_arm: &SurvivalSample, s: usize) -> Result<BrierGrid> {
    if s == 0 {
        return Err(Error::InvalidInput("Brier grid needs at least one point".into()));
    }
    let mut events: Vec<f64> = sample_arm
        .time()
        .iter()
        .zip(sample_arm.event())
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t)
        .collect();
    if events.is_empty() {
        return Err(Error::NoEvents);
    }
    events.sort_by(f64::total_cmp);
    if events.len() < s {
        events.dedup();
        return Ok(BrierGrid {
            times: events,
            fallback: true,
        });
    }
    let mut times: Vec<f64> = (1..=s)
        .map(|r| quantile_sorted(&events, r as f64 / (s + 1) as f64))
        .collect();
    times.dedup();
    Ok(BrierGrid {
        times,
        fallback: false,
    })
}

/// Fold label for every record: events and censored records are shuffled
/// separately, concatenated, and dealt round-robin.
pub fn stratified_folds(event: &[bool], folds: usize, rng: &mut SimRng) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {folds}")));
    }
    if event.len() < folds {
        return Err(Error::TooFewRecords {
            needed: folds,
            got: event.len(),
        });
    }
    let mut events: Vec<usize> = (0..event.len()).filter(|&i| event[i]).collect();
    let mut censored: Vec<usize> = (0..event.len()).filter(|&i| !event[i]).collect();
    events.shuffle(rng);
    censored.shuffle(rng);
    let mut fold = vec![0; event.len()];
    for (pos, &i) in events.iter().chain(&censored).enumerate() {
        fold[i] = pos % folds;
    }
    Ok(fold)
}

/// Held-out predictions `S_k^(-i)(t_r | x_i)` for every candidate `k`,
/// record `i` and grid time `t_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossFitPredictions {
    pub grid: Vec<f64>,
    pub n_records: usize,
    /// Indexed `[k][i * grid.len() + r]`; empty for excluded candidates.
    pub values: Vec<Vec<f64>>,
    pub excluded: Vec<bool>,
}

impl CrossFitPredictions {
    pub fn get(&self, k: usize, i: usize, r: usize) -> f64 {
        self.values[k][i * self.grid.len() + r]
    }
}

pub fn cross_fit_predictions(
    sample_arm: &SurvivalSample,
    specs: &[ModelSpec],
    grid: &[f64],
    folds: usize,
    rng: &mut SimRng,
) -> Result<CrossFitPredictions> {
    let fold = stratified_folds(sample_arm.event(), folds, rng)?;
    let n = sample_arm.len();
    let s = grid.len();
    let mut values = vec![vec![0.0; n * s]; specs.len()];
    let mut excluded = vec![false; specs.len()];
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
        let held: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
        let train_sample = sample_arm.subset(&train);
        for (k, spec) in specs.iter().enumerate() {
            if excluded[k] {
                continue;
            }
            match spec.fit(&train_sample) {
                Ok(fit) => {
                    for &i in &held {
                        let x = sample_arm.covariates().row(i);
                        fit.survival_on(grid, x, &mut values[k][i * s..(i + 1) * s]);
                    }
                }
                Err(_) => excluded[k] = true,
            }
        }
    }
    for (k, v) in values.iter_mut().enumerate() {
        if excluded[k] {
            v.clear();
        }
    }
    Ok(CrossFitPredictions {
        grid: grid.to_vec(),
        n_records: n,
        values,
        excluded,
    })
}

/// Weighted least-squares system over the probability simplex: one row per
/// retained (record, grid time) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BrierSystem {
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
    /// Row-major, `targets.len() x n_candidates`.
    pub predictions: Vec<f64>,
    pub n_candidates: usize,
    /// Rows dropped because the censoring weight had a zero denominator.
    pub dropped: usize,
}

impl BrierSystem {
    pub fn new(targets: Vec<f64>, weights: Vec<f64>, predictions: Vec<f64>, n_candidates: usize) -> Result<Self> {
        if weights.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: targets.len(),
                got: weights.len(),
            });
        }
        if predictions.len() != targets.len() * n_candidates {
            return Err(Error::DimensionMismatch {
                expected: targets.len() * n_candidates,
                got: predictions.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("Brier weights must be finite and nonnegative".into()));
        }
        Ok(Self {
            targets,
            weights,
            predictions,
            n_candidates,
            dropped: 0,
        })
    }

    /// Assembles the system of one arm from held-out predictions of the
    /// candidates not marked excluded (in their original order).
    pub fn assemble(sample_arm: &SurvivalSample, g: &CensoringCurve, cross: &CrossFitPredictions) -> Result<Self> {
        let active: Vec<usize> = (0..cross.values.len()).filter(|&k| !cross.excluded[k]).collect();
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        let mut predictions = Vec::new();
        let mut dropped = 0;
        for i in 0..sample_arm.len() {
            let (y, d) = (sample_arm.time()[i], sample_arm.event()[i]);
            for (r, &t) in cross.grid.iter().enumerate() {
                match censoring_weight(g, y, d, t)? {
                    CensoringWeight::ZeroDenominator => dropped += 1,
                    CensoringWeight::Weight(w) => {
                        targets.push(if y > t { 1.0 } else { 0.0 });
                        weights.push(w);
                        predictions.extend(active.iter().map(|&k| cross.get(k, i, r)));
                    }
                }
            }
        }
        let mut sys = Self::new(targets, weights, predictions, active.len())?;
        sys.dropped = dropped;
        Ok(sys)
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    /// `sum_rows w (Z - P alpha)^2`.
    pub fn objective(&self, alpha: &[f64]) -> f64 {
        let m = self.n_candidates;
        (0..self.n_rows())
            .map(|j| {
                let fit: f64 = self.predictions[j * m..(j + 1) * m].iter().zip(alpha).map(|(p, a)| p * a).sum();
                self.weights[j] * (self.targets[j] - fit).powi(2)
            })
            .sum()
    }

    /// Objective at each simplex vertex, i.e. of each candidate alone.
    pub fn candidate_objectives(&self) -> Vec<f64> {
        (0..self.n_candidates)
            .map(|k| {
                let mut e = vec![0.0; self.n_candidates];
                e[k] = 1.0;
                self.objective(&e)
            })
            .collect()
    }

    /// Gram form `(Q, c, z)` with objective `a'Qa - 2c'a + z`.
    fn normal_equations(&self) -> (DMatrix<f64>, DVector<f64>, f64) {
        let m = self.n_candidates;
        let mut q = DMatrix::zeros(m, m);
        let mut c = DVector::zeros(m);
        let mut z = 0.0;
        for j in 0..self.n_rows() {
            let w = self.weights[j];
            let row = &self.predictions[j * m..(j + 1) * m];
            for a in 0..m {
                c[a] += w * row[a] * self.targets[j];
                for b in 0..=a {
                    q[(a, b)] += w * row[a] * row[b];
                }
            }
            z += w * self.targets[j] * self.targets[j];
        }
        for a in 0..m {
            for b in 0..a {
                q[(b, a)] = q[(a, b)];
            }
        }
        (q, c, z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSolution {
    pub alpha: Vec<f64>,
    pub objective: f64,
    /// Largest violation of the optimality conditions, relative to the scale
    /// of the normal equations.
    pub kkt_residual: f64,
}

/// Orthonormal basis (as columns) of `{v in R^d : sum v = 0}`.
fn sum_zero_basis(d: usize) -> DMatrix<f64> {
    let mut n = DMatrix::zeros(d, d - 1);
    for j in 0..d - 1 {
        // Helmert contrasts
        let len = (j + 1) as f64;
        let norm = (len * (len + 1.0)).sqrt();
        for i in 0..=j {
            n[(i, j)] = 1.0 / norm;
        }
        n[(j + 1, j)] = -len / norm;
    }
    n
}

/// Minimizer of the pattern's objective on the affine hull of its vertices,
/// of minimum norm when the minimizer is not unique.
fn pattern_solution(q: &DMatrix<f64>, c: &DVector<f64>, support: &[usize]) -> DVector<f64> {
    let d = support.len();
    let center = DVector::from_element(d, 1.0 / d as f64);
    if d == 1 {
        return center;
    }
    let qs = DMatrix::from_fn(d, d, |a, b| q[(support[a], support[b])]);
    let cs = DVector::from_fn(d, |a, _| c[support[a]]);
    let n = sum_zero_basis(d);
    let reduced = n.transpose() * &qs * &n;
    let rhs = n.transpose() * (cs - &qs * &center);
    let scale = reduced.amax().max(f64::MIN_POSITIVE);
    let svd = reduced.svd(true, true);
    let y = svd
        .pseudo_inverse(1e-10 * scale)
        .map(|inv| inv * rhs)
        .unwrap_or_else(|_| DVector::zeros(d - 1));
    center + n * y
}

/// Exact weighted least squares over the probability simplex by
/// enumerating support patterns. Ties in the objective go to the solution of
/// least Euclidean norm, which spreads weight evenly over duplicated
/// candidates.
pub fn solve_simplex_ls(system: &BrierSystem) -> Result<SimplexSolution> {
    let m = system.n_candidates;
    if m == 0 {
        return Err(Error::AllCandidatesExcluded);
    }
    assert!(m <= MAX_CANDIDATES, "simplex enumeration supports at most {MAX_CANDIDATES} candidates");
    if system.n_rows() == 0 {
        return Err(Error::InvalidInput("empty Brier system".into()));
    }
    let (q, c, z) = system.normal_equations();
    let value = |a: &DVector<f64>| (a.dot(&(&q * a)) - 2.0 * c.dot(a) + z).max(0.0);
    let scale = q.amax().max(c.amax()).max(f64::MIN_POSITIVE);

    let mut best: Option<(DVector<f64>, f64, f64)> = None;
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|&k| mask & (1 << k) != 0).collect();
        let local = pattern_solution(&q, &c, &support);
        if local.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let mut alpha = DVector::zeros(m);
        for (a, &k) in support.iter().enumerate() {
            alpha[k] = local[a].max(0.0);
        }
        alpha /= alpha.sum();
        let obj = value(&alpha);
        let norm = alpha.norm_squared();
        let better = match &best {
            None => true,
            Some((_, b_obj, b_norm)) => {
                let tol = 1e-10 * b_obj.abs() + 1e-14 * scale;
                obj < b_obj - tol || (obj <= b_obj + tol && norm < b_norm - 1e-12)
            }
        };
        if better {
            best = Some((alpha, obj, norm));
        }
    }
    let (alpha, _, _) = best.expect("every vertex is a feasible pattern");

    // Optimality: the gradient 2(Qa - c) is constant on the support and no
    // smaller anywhere off it.
    let grad = 2.0 * (&q * &alpha - &c);
    let support: Vec<usize> = (0..m).filter(|&k| alpha[k] > 0.0).collect();
    let level = support.iter().map(|&k| grad[k]).sum::<f64>() / support.len() as f64;
    let kkt = (0..m)
        .map(|k| {
            if alpha[k] > 0.0 {
                (grad[k] - level).abs()
            } else {
                (level - grad[k]).max(0.0)
            }
        })
        .fold(0.0, f64::max)
        / scale;
    Ok(SimplexSolution {
        objective: system.objective(alpha.as_slice()),
        alpha: alpha.iter().copied().collect(),
        kkt_residual: kkt,
    })
}

/// Settings shared by every stack fit.
#[derive(Debug, Clone, PartialEq)]
pub struct StackConfig {
    pub specs: Vec<ModelSpec>,
    pub folds: usize,
    pub grid_size: usize,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self {
            specs: ModelSpec::default_set(),
            folds: 5,
            grid_size: 9,
        }
    }
}

impl StackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.specs.is_empty() {
            return Err(Error::InvalidInput("candidate set is empty".into()));
        }
        if self.specs.len() > MAX_CANDIDATES {
            return Err(Error::InvalidInput(format!("at most {MAX_CANDIDATES} candidates are supported")));
        }
        if self.folds < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.grid_size == 0 {
            return Err(Error::InvalidInput("Brier grid size must be positive".into()));
        }
        self.specs.iter().try_for_each(ModelSpec::validate)
    }
}

/// Stacked survival estimator of one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct StackFit {
    pub arm: u8,
    pub specs: Vec<ModelSpec>,
    /// One weight per spec; zero for excluded candidates.
    pub weights: Vec<f64>,
    pub excluded: Vec<bool>,
    /// Full-arm refits; `None` for excluded candidates.
    pub candidates: Vec<Option<FittedCandidate>>,
    pub grid: BrierGrid,
    /// Cross-fitted objective of each candidate alone (NaN if excluded).
    pub candidate_objectives: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Number of (record, grid time) pairs in the Brier system.
    pub n_rows: usize,
    /// False when the arm was too small to cross-fit and the weights are
    /// uniform over the candidates that fit.
    pub cross_fitted: bool,
    n_covariates: usize,
}

impl StackFit {
    /// Stacked `S(t | x)`; errors on bad time or covariate dimension.
    pub fn predict(&self, t: f64, x: &[f64]) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        if x.len() != self.n_covariates {
            return Err(Error::DimensionMismatch {
                expected: self.n_covariates,
                got: x.len(),
            });
        }
        let mut out = [0.0];
        SurvivalPredictor::survival_on(self, &[t], x, &mut out);
        Ok(out[0])
    }

    /// Per-candidate summary for diagnostics output.
    pub fn diagnostics(&self) -> StackDiagnostics {
        StackDiagnostics {
            arm: self.arm,
            grid: self.grid.times.clone(),
            weights: self
                .specs
                .iter()
                .zip(&self.weights)
                .zip(&self.candidate_objectives)
                .map(|((spec, &alpha), &brier)| CandidateWeight {
                    family: spec.family.name().to_string(),
                    alpha,
                    brier: (self.n_rows > 0 && brier.is_finite()).then(|| brier / self.n_rows as f64),
                })
                .collect(),
        }
    }
}

impl SurvivalPredictor for StackFit {
    fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    fn survival_on(&self, times: &[f64], x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut buf = vec![0.0; times.len()];
        for (alpha, fit) in self.weights.iter().zip(&self.candidates) {
            if let (true, Some(fit)) = (*alpha > 0.0, fit) {
                fit.survival_on(times, x, &mut buf);
                for (o, b) in out.iter_mut().zip(&buf) {
                    *o += alpha * b;
                }
            }
        }
        out.iter_mut().for_each(|o| *o = o.clamp(0.0, 1.0));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateWeight {
    pub family: String,
    pub alpha: f64,
    /// Mean weighted squared error per Brier row, when the candidate fit.
    pub brier: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackDiagnostics {
    pub arm: u8,
    pub grid: Vec<f64>,
    pub weights: Vec<CandidateWeight>,
}

/// Solves the weights for the candidates not in `excluded`, returning
/// weights over the full candidate list.
fn solve_active(
    sample_arm: &SurvivalSample,
    g: &CensoringCurve,
    cross: &CrossFitPredictions,
    excluded: &[bool],
) -> Result<(Vec<f64>, Vec<f64>, SimplexSolution, usize)> {
    let mut masked = cross.clone();
    masked.excluded = excluded.to_vec();
    let system = BrierSystem::assemble(sample_arm, g, &masked)?;
    let solution = solve_simplex_ls(&system)?;
    let per = system.candidate_objectives();
    let mut weights = vec![0.0; excluded.len()];
    let mut objectives = vec![f64::NAN; excluded.len()];
    for (a, k) in (0..excluded.len()).filter(|&k| !excluded[k]).enumerate() {
        weights[k] = solution.alpha[a];
        objectives[k] = per[a];
    }
    Ok((weights, objectives, solution, system.n_rows()))
}

/// Fits the stacked estimator for `arm`: censoring curve, Brier grid,
/// cross-fitted predictions, simplex weights, then full-arm refits.
/// Candidates that fail in any fold or in the refit are dropped and the
/// weights re-solved over the rest. Arms with fewer records than folds use
/// one record per fold.
pub fn fit_stack(sample: &SurvivalSample, arm: u8, config: &StackConfig, rng: &mut SimRng) -> Result<StackFit> {
    config.validate()?;
    let sample_arm = sample.arm_sample(arm)?;
    if sample_arm.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    let g = fit_censoring_km(&sample_arm, arm)?;
    let grid = brier_time_grid(&sample_arm, config.grid_size)?;
    let folds = config.folds.min(sample_arm.len());
    if folds < 2 {
        return uniform_stack(&sample_arm, arm, config, grid, sample.n_covariates());
    }
    let cross = cross_fit_predictions(&sample_arm, &config.specs, &grid.times, folds, rng)?;
    let mut excluded = cross.excluded.clone();
    if excluded.iter().all(|&e| e) {
        return Err(Error::AllCandidatesExcluded);
    }
    let candidates: Vec<Option<FittedCandidate>> = config
        .specs
        .iter()
        .zip(&excluded)
        .map(|(spec, &ex)| if ex { None } else { spec.fit(&sample_arm).ok() })
        .collect();
    for (k, c) in candidates.iter().enumerate() {
        excluded[k] |= c.is_none();
    }
    if excluded.iter().all(|&e| e) {
        return Err(Error::AllCandidatesExcluded);
    }
    let (weights, candidate_objectives, solution, n_rows) = solve_active(&sample_arm, &g, &cross, &excluded)?;
    Ok(StackFit {
        arm,
        specs: config.specs.clone(),
        weights,
        excluded,
        candidates,
        grid,
        candidate_objectives,
        objective: solution.objective,
        kkt_residual: solution.kkt_residual,
        n_rows,
        cross_fitted: true,
        n_covariates: sample.n_covariates(),
    })
}

/// Equal weights over the candidates that fit, for arms too small to
/// cross-fit at all.
fn uniform_stack(
    sample_arm: &SurvivalSample,
    arm: u8,
    config: &StackConfig,
    grid: BrierGrid,
    n_covariates: usize,
) -> Result<StackFit> {
    let candidates: Vec<Option<FittedCandidate>> = config.specs.iter().map(|s| s.fit(sample_arm).ok()).collect();
    let excluded: Vec<bool> = candidates.iter().map(Option::is_none).collect();
    let active = excluded.iter().filter(|&&e| !e).count();
    if active == 0 {
        return Err(Error::AllCandidatesExcluded);
    }
    Ok(StackFit {
        arm,
        specs: config.specs.clone(),
        weights: excluded.iter().map(|&e| if e { 0.0 } else { 1.0 / active as f64 }).collect(),
        excluded,
        candidates,
        grid,
        candidate_objectives: vec![f64::NAN; config.specs.len()],
        objective: f64::NAN,
        kkt_residual: 0.0,
        n_rows: 0,
        cross_fitted: false,
        n_covariates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Design;
    use crate::rng::stream;

    fn arm_sample(times: &[f64], events: &[bool]) -> SurvivalSample {
        let n = times.len();
        SurvivalSample::from_columns(times.to_vec(), events.to_vec(), vec![0; n], Design::new(n, 0, vec![]).unwrap())
            .unwrap()
    }

    #[test]
    fn grid_cases() {
        let s = arm_sample(&[1.0, 2.0, 3.0, 4.0, 5.0], &[true; 5]);
        assert_eq!(brier_time_grid(&s, 1).unwrap().times, vec![3.0]);
        let s = arm_sample(&[2.0; 12], &[true; 12]);
        let g = brier_time_grid(&s, 9).unwrap();
        assert_eq!(g.times, vec![2.0]);
        assert!(!g.fallback);
        let s = arm_sample(&[1.0, 2.0, 2.0, 5.0], &[true, true, true, false]);
        let g = brier_time_grid(&s, 9).unwrap();
        assert!(g.fallback);
        assert_eq!(g.times, vec![1.0, 2.0]);
        assert!(matches!(brier_time_grid(&arm_sample(&[1.0], &[false]), 9), Err(Error::NoEvents)));
    }

    #[test]
    fn folds_are_balanced_and_stratified() {
        let event: Vec<bool> = (0..100).map(|i| i % 10 < 7).collect();
        let fold = stratified_folds(&event, 5, &mut stream(1, &[])).unwrap();
        for f in 0..5 {
            let size = fold.iter().filter(|&&v| v == f).count();
            let events = (0..100).filter(|&i| fold[i] == f && event[i]).count();
            assert!((19..=21).contains(&size));
            assert!((13..=15).contains(&events));
        }
        assert!(stratified_folds(&event, 1, &mut stream(1, &[])).is_err());
        assert_eq!(fold, stratified_folds(&event, 5, &mut stream(1, &[])).unwrap());
    }

    #[test]
    fn single_candidate_is_the_point_simplex() {
        let sys = BrierSystem::new(vec![1.0, 0.0], vec![1.0, 2.0], vec![0.3, 0.6], 1).unwrap();
        let sol = solve_simplex_ls(&sys).unwrap();
        assert_eq!(sol.alpha, vec![1.0]);
    }

    #[test]
    fn duplicate_columns_split_evenly() {
        let p = [0.9, 0.2, 0.7, 0.4];
        let preds: Vec<f64> = p.iter().flat_map(|&v| [v, v]).collect();
        let sys = BrierSystem::new(vec![1.0, 0.0, 1.0, 0.0], vec![1.0; 4], preds, 2).unwrap();
        let sol = solve_simplex_ls(&sys).unwrap();
        assert!((sol.alpha[0] - 0.5).abs() < 1e-12 && (sol.alpha[1] - 0.5).abs() < 1e-12);
        let v = sys.candidate_objectives();
        assert!((sol.objective - v[0]).abs() < 1e-12);
    }

    #[test]
    fn helmert_basis_is_orthonormal() {
        for d in 2..6 {
            let n = sum_zero_basis(d);
            let gram = n.transpose() * &n;
            assert!((gram - DMatrix::identity(d - 1, d - 1)).amax() < 1e-14);
            assert!((DMatrix::from_element(1, d, 1.0) * n).amax() < 1e-14);
        }
    }

    #[test]
    fn stacked_prediction_is_the_weighted_average() {
        let s = arm_sample(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[true; 6]);
        let cfg = StackConfig {
            specs: vec![ModelSpec::new(crate::models::Family::Weibull)],
            folds: 2,
            grid_size: 3,
        };
        let stack = fit_stack(&s, 0, &cfg, &mut stream(3, &[])).unwrap();
        assert_eq!(stack.weights, vec![1.0]);
        assert_eq!(stack.predict(0.0, &[]).unwrap(), 1.0);
        let fit = stack.candidates[0].as_ref().unwrap();
        let direct = crate::models::predict_survival(fit, 2.5, &[]).unwrap();
        assert_eq!(stack.predict(2.5, &[]).unwrap(), direct);
    }
}
