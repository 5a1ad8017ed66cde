use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use stacked_rmst::data::{Design, SurvivalSample};
use stacked_rmst::error::Error;
use stacked_rmst::models::{Family, ModelSpec, SurvivalPredictor};
use stacked_rmst::rmst::{
    bootstrap, bootstrap_effect, estimate_effect, event_time_grid, fit_arms, restricted_means, EffectConfig,
    Estimator, EventGrid,
};
use stacked_rmst::rng::stream;
use stacked_rmst::simgen::{generate_replication, Scenario};
use stacked_rmst::stacking::StackConfig;

fn scenario_sample(b: u8, n: usize, seed: u64) -> SurvivalSample {
    generate_replication(&Scenario::new(b).unwrap(), n, seed, 0).unwrap()
}

#[test]
fn relabeling_arms_negates_the_effect_exactly() {
    for (b, seed) in [(1, 3), (4, 8)] {
        let sample = scenario_sample(b, 240, seed);
        let swapped = sample.with_arms_swapped();
        for grid in [EventGrid::Pooled, EventGrid::PerArm] {
            let mut config = EffectConfig::new(vec![20.0, 50.0]);
            config.grid = grid;
            config.estimators = vec![Estimator::Stacked, "cox-linear".parse().map(Estimator::Candidate).unwrap()];
            let a = estimate_effect(&sample, &config, 17).unwrap();
            let s = estimate_effect(&swapped, &config, 17).unwrap();
            for &e in &config.estimators {
                for j in 0..2 {
                    assert_eq!(a.gamma(e, j).unwrap(), -s.gamma(e, j).unwrap());
                }
            }
        }
    }
}

#[test]
fn two_replicates_give_min_and_max() {
    let sample = scenario_sample(1, 150, 4);
    let config = EffectConfig::new(vec![20.0]);
    let analysis = bootstrap_effect(&sample, &config, 2, 5).unwrap();
    let est = analysis.estimate(Estimator::Stacked, 0).unwrap();
    assert_eq!(est.draws.len(), 2);
    let lo = est.draws[0].min(est.draws[1]);
    let hi = est.draws[0].max(est.draws[1]);
    assert_eq!((est.ci_lower, est.ci_upper), (lo, hi));
}

#[test]
fn identical_records_give_zero_width_interval() {
    let n = 12;
    let time = (0..n).map(|i| if i % 2 == 0 { 2.0 } else { 3.0 }).collect();
    let arm = (0..n).map(|i| (i % 2) as u8).collect();
    let x = Design::new(n, 2, vec![0.5; 2 * n]).unwrap();
    let sample = SurvivalSample::from_columns(time, vec![true; n], arm, x).unwrap();
    // Resamples differ only in how many copies each arm gets; the Cox fit of
    // a point mass does not depend on that count.
    let config = EffectConfig::new(vec![5.0]).with_stack(StackConfig {
        specs: vec![ModelSpec::new(Family::CoxLinear)],
        ..Default::default()
    });
    let analysis = bootstrap_effect(&sample, &config, 20, 1).unwrap();
    let est = analysis.estimate(Estimator::Stacked, 0).unwrap();
    // Breslow on a point mass: S = 1 before the common time and exp(-1) from it on,
    // so gamma(5) = (3 + 2/e) - (2 + 3/e) = 1 - 1/e
    let expected = 1.0 - (-1.0f64).exp();
    assert!((est.gamma - expected).abs() < 1e-12, "gamma {}", est.gamma);
    assert_eq!(est.ci_lower, est.ci_upper);
    assert!((est.ci_lower - est.gamma).abs() < 1e-12);
}

#[test]
fn same_seed_same_interval() {
    let sample = scenario_sample(3, 150, 6);
    let config = EffectConfig::new(vec![20.0, 50.0]);
    let a = bootstrap_effect(&sample, &config, 8, 99).unwrap();
    let b = bootstrap_effect(&sample, &config, 8, 99).unwrap();
    for j in 0..2 {
        let (x, y) = (a.estimate(Estimator::Stacked, j).unwrap(), b.estimate(Estimator::Stacked, j).unwrap());
        assert_eq!(x, y);
    }
    let c = bootstrap_effect(&sample, &config, 8, 100).unwrap();
    assert_ne!(a.estimate(Estimator::Stacked, 0), c.estimate(Estimator::Stacked, 0));
}

#[test]
fn degenerate_resamples_hit_the_redraw_cap() {
    // arm 1 has records but no events
    let time = vec![1.0, 2.0, 3.0, 4.0];
    let sample = SurvivalSample::from_columns(
        time,
        vec![true, true, false, false],
        vec![0, 0, 1, 1],
        Design::new(4, 0, vec![]).unwrap(),
    )
    .unwrap();
    let r = bootstrap(&sample, 3, 1, |_, _| Ok(0.0));
    assert!(matches!(r, Err(Error::RedrawCapExceeded(30))));
    assert!(matches!(
        estimate_effect(&sample, &EffectConfig::new(vec![2.0]), 1),
        Err(Error::NoEvents)
    ));
}

#[test]
fn refining_the_grid_moves_the_mean_by_less_than_the_spacing() {
    let sample = scenario_sample(2, 200, 10);
    let stacks = fit_arms(&sample, &StackConfig::default(), 3).unwrap();
    let tau = 50.0;
    let grid = event_time_grid(&sample, None);
    let mut nodes: Vec<f64> = std::iter::once(0.0).chain(grid.iter().copied().filter(|&t| t < tau)).collect();
    nodes.push(tau);
    let max_gap = nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let mut refined = Vec::new();
    for w in nodes.windows(2) {
        refined.push(0.5 * (w[0] + w[1]));
        refined.push(w[1]);
    }
    refined.retain(|&t| t > 0.0);
    for st in &stacks {
        let coarse = restricted_means(st, sample.covariates(), &grid, &[tau]).unwrap()[0];
        let fine = restricted_means(st, sample.covariates(), &refined, &[tau]).unwrap()[0];
        assert!((coarse - fine).abs() < max_gap, "{coarse} vs {fine}, spacing {max_gap}");
        assert!(fine <= coarse + 1e-12, "left sums of a decreasing curve shrink under refinement");
    }
}

#[test]
fn means_are_nondecreasing_in_tau() {
    let sample = scenario_sample(4, 200, 13);
    let stacks = fit_arms(&sample, &StackConfig::default(), 5).unwrap();
    let taus: Vec<f64> = (1..=80).map(|k| k as f64).collect();
    let grid = event_time_grid(&sample, None);
    for st in &stacks {
        let mu = restricted_means(st, sample.covariates(), &grid, &taus).unwrap();
        assert!(mu.windows(2).all(|w| w[1] >= w[0]));
        assert!(mu.iter().zip(&taus).all(|(m, t)| *m >= 0.0 && m <= t));
    }
}

struct Constant(f64, usize);

impl SurvivalPredictor for Constant {
    fn n_covariates(&self) -> usize {
        self.1
    }
    fn survival_on(&self, times: &[f64], _x: &[f64], out: &mut [f64]) {
        for (o, &t) in out.iter_mut().zip(times) {
            *o = if t == 0.0 { 1.0 } else { self.0 };
        }
    }
}

#[test]
fn certain_survival_and_certain_death_attain_the_bound() {
    let x = Design::new(3, 1, vec![0.1, 0.2, 0.3]).unwrap();
    let grid = [0.5, 1.0, 2.0];
    let tau = 7.0;
    // the first interval [0, 0.5) uses S(0) = 1 under the left Riemann sum
    let alive = restricted_means(&Constant(1.0, 1), &x, &grid, &[tau]).unwrap()[0];
    let dead = restricted_means(&Constant(0.0, 1), &x, &[], &[tau]).unwrap()[0];
    assert_eq!(alive, tau);
    assert_eq!(dead, tau, "an empty grid is one interval valued at S(0)");
    let dead = restricted_means(&Constant(0.0, 1), &x, &[1e-12], &[tau]).unwrap()[0];
    assert!(alive - dead > tau - 1e-9);
}

#[test]
fn null_effect_is_centered_at_zero() {
    // same mechanism in both arms, arm label a fair coin independent of x
    let mut gammas = Vec::new();
    let config = EffectConfig::new(vec![20.0]);
    for rep in 0..50u64 {
        let mut rng = stream(31, &[rep]);
        let n = 300;
        let mut time = Vec::new();
        let mut event = Vec::new();
        let mut arm = Vec::new();
        let mut x = Vec::new();
        for _ in 0..n {
            let row: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
            let rate = (-3.0 - 0.3 * (row[0] + row[1])).exp();
            let t: f64 = Exp::new(rate).unwrap().sample(&mut rng);
            let c: f64 = Exp::new(0.4 * rate + 0.005).unwrap().sample(&mut rng);
            time.push(t.min(c));
            event.push(t < c);
            arm.push(rng.random_bool(0.5) as u8);
            x.extend(row);
        }
        let sample = SurvivalSample::from_columns(time, event, arm, Design::new(n, 2, x).unwrap()).unwrap();
        gammas.push(estimate_effect(&sample, &config, rep).unwrap().gamma(Estimator::Stacked, 0).unwrap());
    }
    let m = gammas.len() as f64;
    let mean = gammas.iter().sum::<f64>() / m;
    let sd = (gammas.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    assert!(mean.abs() < 2.0 * sd / m.sqrt(), "mean {mean}, se {}", sd / m.sqrt());
}

#[test]
fn linear_exponential_replication_lands_near_the_truth() {
    let sample = scenario_sample(1, 300, 2024);
    let fit = estimate_effect(&sample, &EffectConfig::new(vec![20.0]), 1).unwrap();
    let g = fit.gamma(Estimator::Stacked, 0).unwrap();
    assert!((g + 2.965).abs() < 1.0, "gamma_hat(20) = {g}");
}
