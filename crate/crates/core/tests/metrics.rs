use proptest::prelude::*;
use stacked_rmst::data::Design;
use stacked_rmst::metrics::{isse_components, summarize, isse_bound_check, ReplicationRecord, TruthGrid};
use stacked_rmst::models::SurvivalPredictor;

struct Curve<F: Fn(f64) -> f64>(F);

impl<F: Fn(f64) -> f64> SurvivalPredictor for Curve<F> {
    fn n_covariates(&self) -> usize {
        2
    }
    fn survival_on(&self, times: &[f64], _x: &[f64], out: &mut [f64]) {
        for (o, &t) in out.iter_mut().zip(times) {
            *o = (self.0)(t);
        }
    }
}

fn design() -> Design {
    Design::new(3, 2, vec![0.0, 1.0, -1.0, 0.5, 2.0, 0.0]).unwrap()
}

#[test]
fn constant_gap_gives_gap_squared_times_tau() {
    let x = design();
    let truth = TruthGrid::from_fn(&x, 20.0, 201, |_, _, t| 0.8 * (-0.05 * t).exp()).unwrap();
    let fit = Curve(|t: f64| 0.8 * (-0.05 * t).exp() + 0.1);
    let (a, b) = isse_components([&fit, &fit], &x, &truth).unwrap();
    assert!((a - 0.2).abs() < 1e-12 && (b - 0.2).abs() < 1e-12, "{a} {b}");
}

#[test]
fn perfect_and_maximal_errors() {
    let x = design();
    let truth = TruthGrid::from_fn(&x, 30.0, 51, |a, _, t| (-(0.02 + 0.01 * a as f64) * t).exp()).unwrap();
    let exact0 = Curve(|t: f64| (-0.02 * t).exp());
    let exact1 = Curve(|t: f64| (-0.03 * t).exp());
    let (a, b) = isse_components([&exact0, &exact1], &x, &truth).unwrap();
    assert!(a.abs() < 1e-15 && b.abs() < 1e-15);
    let zero = TruthGrid::from_fn(&x, 30.0, 51, |_, _, _| 0.0).unwrap();
    let one = Curve(|_| 1.0);
    let (a, b) = isse_components([&one, &one], &x, &zero).unwrap();
    assert!((a - 30.0).abs() < 1e-12 && (b - 30.0).abs() < 1e-12);
}

fn record(est: &str, rep: u64, g: f64, width: f64, isse0: f64, isse1: f64) -> ReplicationRecord {
    ReplicationRecord {
        scenario: 2,
        tau: 20.0,
        truth: 1.0,
        estimator: est.into(),
        replication: rep,
        gamma_hat: g,
        ci_lower: g - width / 2.0,
        ci_upper: g + width / 2.0,
        ok: true,
        isse0,
        isse1,
    }
}

#[test]
fn constant_gap_record_set_meets_the_bound_with_known_slack() {
    // Both arms off by c everywhere: each ISSE component is c^2 tau, and a
    // gamma error of at most c tau keeps (gamma_hat - gamma)^2 <= tau * 2 c^2 tau.
    let (tau, c, gamma) = (20.0, 0.05, -3.0);
    let isse = c * c * tau;
    let recs: Vec<ReplicationRecord> = (0..40)
        .map(|r| {
            let err = c * tau * if r % 2 == 0 { 1.0 } else { -0.5 };
            let mut rec = record("x", r, gamma + err, 1.0, isse, isse);
            rec.tau = tau;
            rec
        })
        .collect();
    let refs: Vec<&ReplicationRecord> = recs.iter().collect();
    let rep = isse_bound_check(&refs, gamma, tau);
    let mse = (c * tau).powi(2) * (1.0 + 0.25) / 2.0;
    assert!((rep.mse - mse).abs() < 1e-12);
    assert!((rep.bound - 2.0 * tau * isse).abs() < 1e-12);
    assert!(rep.pass);
    assert!((rep.ratio - mse / (2.0 * tau * isse)).abs() < 1e-12);
}

proptest! {
    #[test]
    fn mse_is_bias_squared_plus_variance(
        gammas in prop::collection::vec(-50.0f64..50.0, 2..40),
        truth in -20.0f64..20.0,
    ) {
        let recs: Vec<ReplicationRecord> = gammas
            .iter()
            .enumerate()
            .flat_map(|(r, &g)| {
                [record("cox-linear", r as u64, g + 1.0, 2.0, 0.1, 0.1), record("stacked", r as u64, g, 1.0, 0.2, 0.1)]
            })
            .collect();
        let rows = summarize(&recs, truth, "cox-linear").unwrap();
        for row in &rows {
            let expect = row.bias.powi(2) + row.variance;
            prop_assert!((row.mse - expect).abs() <= 1e-10 * row.mse.max(1e-300));
        }
        prop_assert_eq!(rows[0].mse_ratio, 1.0);
        prop_assert!((rows[1].acl_ratio - 0.5).abs() < 1e-12);
        prop_assert!((rows[1].isse_ratio - 1.5).abs() < 1e-12);
    }
}

#[test]
fn oracle_estimator_has_no_bias_or_error() {
    let recs: Vec<ReplicationRecord> = (0..5).map(|r| record("cox-linear", r, 2.5, 0.0, 0.0, 0.0)).collect();
    let rows = summarize(&recs, 2.5, "cox-linear").unwrap();
    assert_eq!(rows[0].rel_bias_pct, 0.0);
    assert_eq!(rows[0].mse, 0.0);
    assert!(rows[0].bound_ok);
}
