//! Python bindings: samples, survival curves, the scenario generator, effect
//! estimation with bootstrap intervals, and the simulation study.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use stacked_rmst::km::fit_km;
use stacked_rmst::models::{Family, ModelSpec};
use stacked_rmst::rmst::{bootstrap_effect, EffectConfig, Estimator, EventGrid};
use stacked_rmst::simgen::{self, calibrate_censoring_shift, censoring_fraction, true_effect_oracle};
use stacked_rmst::simulation::{isse_association, run_simulation, SimulationConfig, STUDY_ESTIMATORS};
use stacked_rmst::stacking::{solve_simplex_ls, BrierSystem, StackConfig};
use stacked_rmst::{Design, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NonConvergence { .. }
        | Error::MonotoneLikelihood(_)
        | Error::AllCandidatesExcluded
        | Error::RedrawCapExceeded(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any().unbind(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn serialize<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &v)
}

/// Right-censored sample: times, event flags, arms and a covariate matrix.
#[pyclass(name = "SurvivalSample", module = "stacked_rmst_py", frozen)]
struct PySample(stacked_rmst::SurvivalSample);

#[pymethods]
impl PySample {
    #[new]
    #[pyo3(signature = (time, event, arm, covariates=None))]
    fn new(time: Vec<f64>, event: Vec<bool>, arm: Vec<u8>, covariates: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        let n = time.len();
        let x = match covariates {
            Some(rows) if !rows.is_empty() => Design::from_rows(&rows).map_err(py_err)?,
            _ => Design::new(n, 0, Vec::new()).map_err(py_err)?,
        };
        stacked_rmst::SurvivalSample::from_columns(time, event, arm, x).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        let f = std::fs::File::open(path).map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
        stacked_rmst::SurvivalSample::read_csv(f).map(Self).map_err(py_err)
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        let f = std::fs::File::create(path).map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
        self.0.write_csv(f).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn n_events(&self) -> usize {
        self.0.n_events()
    }

    #[getter]
    fn n_covariates(&self) -> usize {
        self.0.n_covariates()
    }

    #[getter]
    fn time(&self) -> Vec<f64> {
        self.0.time().to_vec()
    }

    #[getter]
    fn event(&self) -> Vec<bool> {
        self.0.event().to_vec()
    }

    #[getter]
    fn arm(&self) -> Vec<u8> {
        self.0.arm().to_vec()
    }

    #[getter]
    fn covariate_names(&self) -> Vec<String> {
        self.0.covariate_names().to_vec()
    }

    fn covariates(&self) -> Vec<Vec<f64>> {
        self.0.covariates().iter_rows().map(<[f64]>::to_vec).collect()
    }

    /// Same records with treatment labels exchanged.
    fn swap_arms(&self) -> Self {
        Self(self.0.with_arms_swapped())
    }

    fn __repr__(&self) -> String {
        format!(
            "SurvivalSample(n={}, events={}, covariates={})",
            self.0.len(),
            self.0.n_events(),
            self.0.n_covariates()
        )
    }
}

/// Right-continuous step survival curve.
#[pyclass(name = "StepSurvivalCurve", module = "stacked_rmst_py", frozen)]
struct PyCurve(stacked_rmst::StepSurvivalCurve);

#[pymethods]
impl PyCurve {
    #[new]
    fn new(jump_times: Vec<f64>, values: Vec<f64>) -> PyResult<Self> {
        stacked_rmst::StepSurvivalCurve::new(jump_times, values).map(Self).map_err(py_err)
    }

    fn evaluate(&self, t: f64) -> PyResult<f64> {
        self.0.evaluate(t).map_err(py_err)
    }

    fn restricted_mean(&self, tau: f64) -> PyResult<f64> {
        self.0.restricted_mean(tau).map_err(py_err)
    }

    #[getter]
    fn jump_times(&self) -> Vec<f64> {
        self.0.jump_times().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }
}

#[pyfunction]
fn kaplan_meier(times: Vec<f64>, events: Vec<bool>) -> PyResult<PyCurve> {
    fit_km(&times, &events).map(PyCurve).map_err(py_err)
}

/// One of the four benchmark data-generating scenarios.
#[pyclass(name = "Scenario", module = "stacked_rmst_py", frozen)]
struct PyScenario(simgen::Scenario);

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (id, censoring_shift=0.0))]
    fn new(id: u8, censoring_shift: f64) -> PyResult<Self> {
        let s = simgen::Scenario::new(id).map_err(py_err)?;
        Ok(Self(if censoring_shift == 0.0 { s } else { s.with_censoring_shift(censoring_shift) }))
    }

    #[getter]
    fn id(&self) -> u8 {
        self.0.id
    }

    #[pyo3(signature = (n, seed, replication=0))]
    fn generate(&self, n: usize, seed: u64, replication: u64) -> PyResult<PySample> {
        simgen::generate_replication(&self.0, n, seed, replication).map(PySample).map_err(py_err)
    }

    /// Monte Carlo truth: list of dicts with `tau`, `gamma` and `se`.
    #[pyo3(signature = (taus, draws=1_000_000, seed=1))]
    fn true_effect(&self, py: Python<'_>, taus: Vec<f64>, draws: usize, seed: u64) -> PyResult<Py<PyAny>> {
        let values = py.detach(|| true_effect_oracle(&self.0, &taus, draws, seed)).map_err(py_err)?;
        let out: Vec<Value> = values
            .iter()
            .map(|v| serde_json::json!({"tau": v.tau, "gamma": v.gamma, "se": v.se}))
            .collect();
        to_py(py, &Value::Array(out))
    }

    #[pyo3(signature = (draws=200_000, seed=1))]
    fn censoring_fraction(&self, draws: usize, seed: u64) -> f64 {
        censoring_fraction(&self.0, draws, seed)
    }

    /// Scenario whose censoring intercept is shifted to reach `target`.
    #[pyo3(signature = (target, draws=200_000, seed=1))]
    fn with_censoring(&self, target: f64, draws: usize, seed: u64) -> PyResult<Self> {
        let shift = calibrate_censoring_shift(&self.0, target, draws, seed).map_err(py_err)?;
        Ok(Self(self.0.with_censoring_shift(shift)))
    }
}

/// Minimizes the weighted Brier objective over the probability simplex.
/// `predictions` has one row per target and one column per candidate.
#[pyfunction]
fn solve_simplex(targets: Vec<f64>, weights: Vec<f64>, predictions: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, f64)> {
    let m = predictions.first().map_or(0, Vec::len);
    if predictions.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged prediction rows"));
    }
    let flat = predictions.concat();
    let sys = BrierSystem::new(targets, weights, flat, m).map_err(py_err)?;
    let sol = solve_simplex_ls(&sys).map_err(py_err)?;
    Ok((sol.alpha, sol.objective))
}

fn families(candidates: Option<Vec<String>>) -> PyResult<Vec<Family>> {
    match candidates {
        None => Ok(Family::ALL.to_vec()),
        Some(names) => names.iter().map(|n| n.parse::<Family>().map_err(py_err)).collect(),
    }
}

fn stack_config(candidates: Option<Vec<String>>, folds: usize, grid_size: Option<usize>) -> PyResult<StackConfig> {
    let base = StackConfig::default();
    Ok(StackConfig {
        specs: families(candidates)?.into_iter().map(ModelSpec::new).collect(),
        folds,
        grid_size: grid_size.unwrap_or(base.grid_size),
    })
}

/// Stacked and single-candidate RMST effects with percentile bootstrap
/// intervals. Returns one dict per estimator and horizon.
#[pyfunction]
#[pyo3(signature = (sample, taus, B=300, seed=1, candidates=None, folds=5, grid_size=None, event_grid="pooled"))]
#[allow(non_snake_case, clippy::too_many_arguments)]
fn estimate_effect(
    py: Python<'_>,
    sample: &PySample,
    taus: Vec<f64>,
    B: usize,
    seed: u64,
    candidates: Option<Vec<String>>,
    folds: usize,
    grid_size: Option<usize>,
    event_grid: &str,
) -> PyResult<Py<PyAny>> {
    let stack = stack_config(candidates, folds, grid_size)?;
    let mut config = EffectConfig::new(taus).with_stack(stack);
    config.grid = match event_grid {
        "pooled" => EventGrid::Pooled,
        "per-arm" => EventGrid::PerArm,
        other => return Err(PyValueError::new_err(format!("unknown event grid `{other}`"))),
    };
    config.estimators = std::iter::once(Estimator::Stacked)
        .chain(config.stack.specs.iter().map(|s| Estimator::Candidate(s.family)))
        .collect();
    let analysis = py.detach(|| bootstrap_effect(&sample.0, &config, B, seed)).map_err(py_err)?;
    let weights = |a: usize| analysis.point.stacks[a].weights.clone();
    let mut out = Vec::new();
    for &e in &config.estimators {
        for j in 0..config.taus.len() {
            let Some(est) = analysis.estimate(e, j) else { continue };
            let mut v = serde_json::to_value(&est).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
            if e == Estimator::Stacked {
                v["weights0"] = weights(0).into();
                v["weights1"] = weights(1).into();
            }
            out.push(v);
        }
    }
    to_py(py, &Value::Array(out))
}

/// Runs the simulation study and returns `records`, `truths`, `summary` and
/// the ISSE rank correlations.
#[pyfunction]
#[pyo3(signature = (
    scenarios=vec![1, 2, 3, 4], n=300, nsim=200, taus=vec![20.0, 50.0], B=100, seed=1,
    oracle_draws=1_000_000, first_replication=0, candidates=None
))]
#[allow(non_snake_case, clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    scenarios: Vec<u8>,
    n: usize,
    nsim: usize,
    taus: Vec<f64>,
    B: usize,
    seed: u64,
    oracle_draws: usize,
    first_replication: u64,
    candidates: Option<Vec<String>>,
) -> PyResult<Py<PyAny>> {
    let stack = stack_config(candidates, 5, None)?;
    let config = SimulationConfig {
        scenarios,
        n,
        n_sim: nsim,
        first_replication,
        taus,
        bootstrap: B,
        estimators: STUDY_ESTIMATORS
            .into_iter()
            .filter(|e| match e {
                Estimator::Candidate(f) => stack.specs.iter().any(|s| s.family == *f),
                Estimator::Stacked => true,
            })
            .collect(),
        stack,
        seed,
        oracle_draws,
        ..Default::default()
    };
    let out = py.detach(|| run_simulation(&config, None, &|_, _| {})).map_err(py_err)?;
    let assoc = isse_association(&out.summary);
    let dict = PyDict::new(py);
    dict.set_item("records", serialize(py, &out.records)?)?;
    dict.set_item("truths", serialize(py, &out.truths)?)?;
    dict.set_item("summary", serialize(py, &out.summary)?)?;
    dict.set_item("isse_rank_correlation", (assoc.rho_mse, assoc.rho_abs_bias))?;
    Ok(dict.into_any().unbind())
}

#[pymodule]
fn stacked_rmst_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySample>()?;
    m.add_class::<PyCurve>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(kaplan_meier, m)?)?;
    m.add_function(wrap_pyfunction!(solve_simplex, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_effect, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
