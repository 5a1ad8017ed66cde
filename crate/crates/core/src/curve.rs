//! Right-continuous step survival curves.

use crate::error::{Error, Result};

/// A survival function that equals 1 before its first jump and the value of
/// the most recent jump afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSurvivalCurve {
    jump_times: Vec<f64>,
    values: Vec<f64>,
}

impl StepSurvivalCurve {
    /// Builds a curve from jump times (strictly increasing, finite, >= 0) and
    /// the survival value after each jump (nonincreasing, within [0, 1]).
    pub fn new(jump_times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if jump_times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: jump_times.len(),
                got: values.len(),
            });
        }
        let mut prev_t = f64::NEG_INFINITY;
        let mut prev_v = 1.0;
        for (&t, &v) in jump_times.iter().zip(&values) {
            if !t.is_finite() || t < 0.0 || t <= prev_t {
                return Err(Error::InvalidInput(format!(
                    "jump times must be finite, nonnegative and strictly increasing (got {t})"
                )));
            }
            if !(0.0..=1.0).contains(&v) || v > prev_v {
                return Err(Error::InvalidInput(format!(
                    "survival values must be nonincreasing within [0, 1] (got {v})"
                )));
            }
            prev_t = t;
            prev_v = v;
        }
        Ok(Self { jump_times, values })
    }

    /// The curve that is 1 everywhere.
    pub fn constant_one() -> Self {
        Self {
            jump_times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `S(t)`: value of the last jump at or before `t`, else 1.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        let k = self.jump_times.partition_point(|&s| s <= t);
        Ok(if k == 0 { 1.0 } else { self.values[k - 1] })
    }

    /// `S(t-)`: value of the last jump strictly before `t`, else 1.
    pub fn left_limit(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s < t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// Exact area under the curve on `[0, tau]`.
    pub fn restricted_mean(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
        }
        let mut area = 0.0;
        let mut prev_t = 0.0;
        let mut level = 1.0;
        for (&t, &v) in self.jump_times.iter().zip(&self.values) {
            if t >= tau {
                break;
            }
            area += (t - prev_t) * level;
            prev_t = t;
            level = v;
        }
        Ok(area + (tau - prev_t) * level)
    }
}
