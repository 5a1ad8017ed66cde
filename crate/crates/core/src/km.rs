//! Product-limit estimation, including the per-arm reverse Kaplan-Meier
//! estimate of the censoring distribution used for IPCW weights.

use crate::curve::StepSurvivalCurve;
use crate::data::SurvivalSample;
use crate::error::{Error, Result};

/// Kaplan-Meier estimate of `S(t)`.
///
/// At each distinct event time `t_j` the curve drops by the factor
/// `1 - d_j / n_j`, where `n_j` counts records with `y >= t_j`.
pub fn fit_km(times: &[f64], events: &[bool]) -> Result<StepSurvivalCurve> {
    if times.is_empty() {
        return Err(Error::InvalidInput("empty input".into()));
    }
    if times.len() != events.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: events.len(),
        });
    }
    if let Some(&t) = times.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::NegativeTime(t));
    }
    product_limit(times, events, false)
}

/// Shared product-limit loop. With `other_kind_first`, records that are not
/// jumps but share the jump time leave the risk set first, i.e. events
/// precede censorings when estimating the censoring curve.
fn product_limit(times: &[f64], jumps: &[bool], other_kind_first: bool) -> Result<StepSurvivalCurve> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut at_risk = times.len();
    let mut surv = 1.0;
    let mut jump_times = Vec::new();
    let mut values = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let mut d = 0usize;
        let mut others = 0usize;
        let mut end = k;
        while end < order.len() && times[order[end]] == t {
            if jumps[order[end]] {
                d += 1;
            } else {
                others += 1;
            }
            end += 1;
        }
        if d > 0 {
            let n = if other_kind_first { at_risk - others } else { at_risk };
            surv *= 1.0 - d as f64 / n as f64;
            jump_times.push(t);
            values.push(surv.max(0.0));
        }
        at_risk -= end - k;
        k = end;
    }
    StepSurvivalCurve::new(jump_times, values)
}

/// Reverse Kaplan-Meier estimate of `G(t) = P(C > t | A = a)` for one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoringCurve {
    pub arm: u8,
    pub curve: StepSurvivalCurve,
}

/// Fits the censoring curve of `arm`, treating censorings as the events.
/// When an event and a censoring share a time, the event leaves the risk set
/// first.
pub fn fit_censoring_km(sample: &SurvivalSample, arm: u8) -> Result<CensoringCurve> {
    let idx = sample.arm_indices(arm);
    if idx.is_empty() {
        return Err(Error::EmptyArm(arm));
    }
    let times: Vec<f64> = idx.iter().map(|&i| sample.time()[i]).collect();
    let censored: Vec<bool> = idx.iter().map(|&i| !sample.event()[i]).collect();
    Ok(CensoringCurve {
        arm,
        curve: product_limit(&times, &censored, true)?,
    })
}

/// Outcome of an IPCW weight evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CensoringWeight {
    Weight(f64),
    /// `Δ_i(t) = 1` but `G(min(y_i, t)-) = 0`; the term is dropped.
    ZeroDenominator,
}

impl CensoringWeight {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Weight(w) => Some(w),
            Self::ZeroDenominator => None,
        }
    }
}

/// IPCW weight `Δ_i(t) / G(min(y_i, t)-)` of one record at time `t`.
///
/// `Δ_i(t)` is 1 when the record is still under observation at `t`
/// (`y_i > t`) or had an observed event by then; censored-before-`t`
/// records get weight 0. The denominator uses the left limit of `G`.
pub fn censoring_weight(g: &CensoringCurve, y: f64, event: bool, t: f64) -> Result<CensoringWeight> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    let observed = y > t || event;
    if !observed {
        return Ok(CensoringWeight::Weight(0.0));
    }
    let denom = g.curve.left_limit(y.min(t));
    Ok(if denom > 0.0 {
        CensoringWeight::Weight(1.0 / denom)
    } else {
        CensoringWeight::ZeroDenominator
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Design, SurvivalSample};
    use proptest::prelude::*;

    fn arm0(times: &[f64], events: &[bool]) -> SurvivalSample {
        let n = times.len();
        SurvivalSample::from_columns(
            times.to_vec(),
            events.to_vec(),
            vec![0; n],
            Design::new(n, 0, vec![]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn uncensored_is_empirical_survival() {
        let c = fit_km(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
        assert!((c.evaluate(1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.evaluate(2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.evaluate(3.0).unwrap(), 0.0);
    }

    #[test]
    fn censored_middle_record() {
        // S(1) = 1 - 1/3; at t = 3 one at risk, one event -> 0.
        let c = fit_km(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
        assert!((c.evaluate(1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.evaluate(2.9).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.evaluate(3.0).unwrap(), 0.0);
    }

    #[test]
    fn all_censored_is_flat() {
        let c = fit_km(&[1.0, 2.0], &[false, false]).unwrap();
        assert_eq!(c.evaluate(10.0).unwrap(), 1.0);
        assert!(fit_km(&[], &[]).is_err());
    }

    #[test]
    fn censoring_curve_cases() {
        let g = fit_censoring_km(&arm0(&[1.0, 2.0], &[true, true]), 0).unwrap();
        assert_eq!(g.curve.evaluate(5.0).unwrap(), 1.0);

        let g = fit_censoring_km(&arm0(&[1.0, 2.0], &[false, true]), 0).unwrap();
        assert_eq!(g.curve.evaluate(1.0).unwrap(), 0.5);
        assert_eq!(g.curve.evaluate(100.0).unwrap(), 0.5);

        assert!(matches!(
            fit_censoring_km(&arm0(&[1.0], &[true]), 1),
            Err(Error::EmptyArm(1))
        ));
    }

    #[test]
    fn censoring_ties_put_events_first() {
        // Event and censoring at t=1: the event leaves first, so the single
        // censoring sees a risk set of 2 (itself and the t=2 record).
        let g = fit_censoring_km(&arm0(&[1.0, 1.0, 2.0], &[true, false, true]), 0).unwrap();
        assert!((g.curve.evaluate(1.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weight_cases() {
        let g = CensoringCurve {
            arm: 0,
            curve: StepSurvivalCurve::new(vec![1.0, 3.0], vec![0.8, 0.4]).unwrap(),
        };
        // G(2-) = 0.8
        assert_eq!(censoring_weight(&g, 2.0, true, 5.0).unwrap(), CensoringWeight::Weight(1.25));
        assert_eq!(censoring_weight(&g, 2.0, false, 5.0).unwrap(), CensoringWeight::Weight(0.0));
        let g1 = CensoringCurve {
            arm: 0,
            curve: StepSurvivalCurve::constant_one(),
        };
        assert_eq!(censoring_weight(&g1, 7.0, false, 5.0).unwrap(), CensoringWeight::Weight(1.0));
        // left limit: a censoring jump at exactly y does not deflate the weight
        assert_eq!(censoring_weight(&g, 1.0, true, 5.0).unwrap(), CensoringWeight::Weight(1.0));
        let g0 = CensoringCurve {
            arm: 0,
            curve: StepSurvivalCurve::new(vec![1.0], vec![0.0]).unwrap(),
        };
        assert_eq!(censoring_weight(&g0, 2.0, true, 5.0).unwrap(), CensoringWeight::ZeroDenominator);
        assert!(censoring_weight(&g, 2.0, true, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn no_censoring_matches_empirical(times in prop::collection::vec(0.0f64..10.0, 1..40)) {
            let events = vec![true; times.len()];
            let c = fit_km(&times, &events).unwrap();
            let n = times.len() as f64;
            for &t in &times {
                let empirical = times.iter().filter(|&&s| s > t).count() as f64 / n;
                prop_assert!((c.evaluate(t).unwrap() - empirical).abs() < 1e-12);
            }
        }

        #[test]
        fn reverse_km_equals_flipped_km_without_ties(
            raw in prop::collection::btree_set(1u32..10_000, 1..40),
            flips in prop::collection::vec(any::<bool>(), 40),
        ) {
            let times: Vec<f64> = raw.iter().map(|&t| t as f64 / 100.0).collect();
            let events: Vec<bool> = flips[..times.len()].to_vec();
            let g = fit_censoring_km(&arm0(&times, &events), 0).unwrap();
            let flipped: Vec<bool> = events.iter().map(|e| !e).collect();
            prop_assert_eq!(g.curve, fit_km(&times, &flipped).unwrap());
        }

        #[test]
        fn km_is_valid_curve(times in prop::collection::vec(0.0f64..10.0, 1..40), flips in prop::collection::vec(any::<bool>(), 40)) {
            let events = flips[..times.len()].to_vec();
            let c = fit_km(&times, &events).unwrap();
            prop_assert!(c.values().windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(c.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
