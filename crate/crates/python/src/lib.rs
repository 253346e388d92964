//! Python bindings. Instances are immutable; structured results come back
//! as plain dicts and lists.

use blocking_bandits::model::{Instance, SeedSpec};
use blocking_bandits::{experiments, offline, pinwheel, policies, regret, run_policy};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: blocking_bandits::Error) -> PyErr {
    match e {
        blocking_bandits::Error::StateCap { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Round-trips a serializable value through Python's json module.
fn to_object<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Instance", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: Instance,
}

#[pymethods]
impl PyInstance {
    /// Bernoulli arms with ids 1..K in the given order.
    #[new]
    #[pyo3(signature = (mus, delays, deterministic = false))]
    fn new(mus: Vec<f64>, delays: Vec<u32>, deterministic: bool) -> PyResult<Self> {
        let inner = if deterministic {
            Instance::deterministic(&mus, &delays)
        } else {
            Instance::bernoulli(&mus, &delays)
        }
        .map_err(to_py)?;
        Ok(PyInstance { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyInstance { inner: Instance::from_json_str(text, None).map_err(to_py)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json().to_string()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn ids(&self) -> Vec<u32> {
        self.inner.ids()
    }

    #[getter]
    fn mus(&self) -> Vec<f64> {
        self.inner.mus()
    }

    #[getter]
    fn delays(&self) -> Vec<u32> {
        self.inner.delays()
    }

    fn __repr__(&self) -> String {
        format!("Instance(ids={:?}, mus={:?}, delays={:?})", self.inner.ids(), self.inner.mus(), self.inner.delays())
    }
}

/// Runs a named policy and returns (cumulative reward, per-slot arm ids with
/// None for idle).
#[pyfunction]
#[pyo3(signature = (instance, policy, horizon, seed, alpha = policies::DEFAULT_ALPHA))]
fn simulate(instance: &PyInstance, policy: &str, horizon: u64, seed: u64, alpha: f64) -> PyResult<(f64, Vec<Option<u32>>)> {
    let inst = &instance.inner;
    let mut p = policies::policy_by_name(policy, inst, alpha).map_err(to_py)?;
    let trace = run_policy(inst, &mut p, horizon, SeedSpec::new(seed, 0)).map_err(to_py)?;
    let ids = trace.actions().iter().map(|a| a.map(|i| inst.arm(i).id)).collect();
    Ok((trace.cum_reward(), ids))
}

/// Optimal mean reward over the horizon and one optimal schedule of arm ids.
#[pyfunction]
#[pyo3(signature = (instance, horizon, state_cap = offline::DEFAULT_STATE_CAP))]
fn exact_opt(instance: &PyInstance, horizon: u64, state_cap: u64) -> PyResult<(f64, Vec<Option<u32>>)> {
    let inst = instance.inner.to_deterministic();
    let dp = offline::exact_opt(&inst, horizon, state_cap).map_err(to_py)?;
    let ids = dp.schedule.iter().map(|a| a.map(|i| inst.arm(i).id)).collect();
    Ok((dp.value, ids))
}

#[pyfunction]
fn oracle_greedy_reward(instance: &PyInstance, horizon: u64) -> f64 {
    offline::oracle_greedy_reward(&instance.inner.to_deterministic(), horizon)
}

/// LP relaxation bounds as a dict with n_star, upper, n_prime, lower.
#[pyfunction]
fn lp_bounds<'py>(py: Python<'py>, instance: &PyInstance, horizon: u64) -> PyResult<Bound<'py, PyAny>> {
    to_object(py, &offline::lp_bounds(&instance.inner.to_deterministic(), horizon))
}

#[pyfunction]
fn k_star(delays: Vec<u32>) -> usize {
    regret::k_star(&delays)
}

#[pyfunction]
#[pyo3(signature = (instance, horizon, eps = 0.1))]
fn bounds<'py>(py: Python<'py>, instance: &PyInstance, horizon: f64, eps: f64) -> PyResult<Bound<'py, PyAny>> {
    to_object(py, &regret::bound_report(&instance.inner, horizon, eps).map_err(to_py)?)
}

/// Pinwheel verdict for window lengths `a`, as a dict with status and
/// certificate.
#[pyfunction]
#[pyo3(signature = (a, state_cap = offline::DEFAULT_STATE_CAP))]
fn pinwheel_decide<'py>(py: Python<'py>, a: Vec<u32>, state_cap: u64) -> PyResult<Bound<'py, PyAny>> {
    let inst = pinwheel::PinwheelInstance::new(a).map_err(to_py)?;
    to_object(py, &pinwheel::decide(&inst, state_cap))
}

/// Mean per-slot cumulative regret of UCB Greedy against Oracle Greedy.
#[pyfunction]
#[pyo3(signature = (instance, horizon, runs, seed, alpha = policies::DEFAULT_ALPHA))]
fn measure_regret(py: Python<'_>, instance: &PyInstance, horizon: u64, runs: usize, seed: u64, alpha: f64) -> PyResult<Vec<f64>> {
    let inst = instance.inner.clone();
    py.detach(|| experiments::measure_regret(&inst, horizon, runs, SeedSpec::new(seed, 0), alpha)).map_err(to_py)
}

#[pymodule(name = "blocking_bandits")]
fn blocking_bandits_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(exact_opt, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_greedy_reward, m)?)?;
    m.add_function(wrap_pyfunction!(lp_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(k_star, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    m.add_function(wrap_pyfunction!(pinwheel_decide, m)?)?;
    m.add_function(wrap_pyfunction!(measure_regret, m)?)?;
    Ok(())
}
