//! Causal restricted mean survival time effects from right-censored data,
//! estimated by stacking candidate survival models with IPCW Brier-score
//! weights, together with a simulation harness for benchmarking.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curve;
pub mod data;
pub mod error;
pub mod km;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod rmst;
pub mod rng;
pub mod simgen;
pub mod simulation;
pub mod stacking;

pub use curve::StepSurvivalCurve;
pub use data::{Design, RawRecord, SurvivalSample};
pub use error::{Error, Result};
