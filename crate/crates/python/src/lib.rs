//! Python bindings: networks, property sets, the violation estimator and
//! verifier, the navigation environment and a few training helpers.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use approxviol::algos::{self, PenaltyMode};
use approxviol::env::{self, Outcome, Task};
use approxviol::mlp::{self, Matrix, MlpSpec};
use approxviol::properties::{self, active_indices, navigation_property_set};
use approxviol::{rng_from_seed, verify};

fn py_err(e: approxviol::Error) -> PyErr {
    match e {
        approxviol::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "Mlp", module = "pyapproxviol", from_py_object)]
#[derive(Clone)]
struct Mlp {
    inner: mlp::Mlp,
}

#[pymethods]
impl Mlp {
    /// Glorot-uniform network with the given layer sizes.
    #[new]
    #[pyo3(signature = (layer_sizes, seed = 0))]
    fn new(layer_sizes: Vec<usize>, seed: u64) -> PyResult<Self> {
        let spec = MlpSpec::new(layer_sizes).map_err(py_err)?;
        let inner = mlp::Mlp::new(spec, &mut rng_from_seed(seed)).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: mlp::Mlp::load(path).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[getter]
    fn layer_sizes(&self) -> Vec<usize> {
        self.inner.spec().layer_sizes.clone()
    }

    fn forward(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.forward(&x).map_err(py_err)
    }

    fn forward_batch(&self, xs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let m = Matrix::from_rows(&xs).map_err(py_err)?;
        Ok(self.inner.forward_batch(&m).map_err(py_err)?.to_rows())
    }

    /// Margins `y_i − y_k` at `x`.
    fn margins(&self, x: Vec<f64>, k: usize) -> PyResult<Vec<f64>> {
        mlp::MarginNet::new(&self.inner, k).and_then(|m| m.forward(&x)).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Mlp({:?})", self.inner.spec().layer_sizes)
    }
}

#[pyclass(name = "PropertySet", module = "pyapproxviol", from_py_object)]
#[derive(Clone)]
struct PropertySet {
    inner: properties::PropertySet,
}

#[pymethods]
impl PropertySet {
    /// The three hard-coded navigation properties.
    #[staticmethod]
    fn navigation() -> Self {
        Self { inner: navigation_property_set() }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: properties::PropertySet::load(path).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Indices of the properties whose pre-condition contains `state`.
    fn active(&self, state: Vec<f64>) -> PyResult<Vec<usize>> {
        active_indices(&self.inner, &state).map_err(py_err)
    }

    /// `(lower, upper)` bounds of property `index`, one pair per input.
    fn bounds(&self, index: usize) -> PyResult<(Vec<f64>, Vec<f64>, usize)> {
        let p = self.inner.get(index).ok_or_else(|| PyValueError::new_err("property index out of range"))?;
        Ok((p.pre.lower(), p.pre.upper(), p.forbidden_action))
    }

    /// Add an online property around `state` forbidding `action`; returns
    /// whether the set grew.
    #[pyo3(signature = (state, action, epsilon = properties::DEFAULT_EPSILON))]
    fn add_online(&mut self, state: Vec<f64>, action: usize, epsilon: f64) -> PyResult<bool> {
        let domain = properties::InputBox::navigation_domain();
        let p = properties::generate_online_property(&state, action, epsilon, &domain).map_err(py_err)?;
        Ok(properties::merge_online(&mut self.inner, p))
    }
}

/// Monte Carlo violation at `state`: `(value, active_count)`.
#[pyfunction]
#[pyo3(signature = (net, props, state, m = properties::DEFAULT_SAMPLES, seed = 0))]
fn approximate_violation(net: &Mlp, props: &PropertySet, state: Vec<f64>, m: usize, seed: u64) -> PyResult<(f64, usize)> {
    let est = properties::approximate_violation(&net.inner, &props.inner, &state, m, &mut rng_from_seed(seed))
        .map_err(py_err)?;
    Ok((est.value, est.active_count))
}

/// Formal bracket for property `index`: `(lower, upper, boxes, budget_exhausted)`.
#[pyfunction]
#[pyo3(signature = (net, props, index, gap = verify::DEFAULT_GAP, max_boxes = verify::DEFAULT_MAX_BOXES))]
fn formal_violation(
    net: &Mlp,
    props: &PropertySet,
    index: usize,
    gap: f64,
    max_boxes: usize,
) -> PyResult<(f64, f64, usize, bool)> {
    let p = props.inner.get(index).ok_or_else(|| PyValueError::new_err("property index out of range"))?;
    let r = verify::formal_violation(&net.inner, p, gap, max_boxes).map_err(py_err)?;
    Ok((r.violation_lower, r.violation_upper, r.boxes_explored, r.budget_exhausted))
}

#[pyclass(name = "NavEnv", module = "pyapproxviol")]
struct NavEnv {
    inner: env::NavEnv,
}

#[pymethods]
impl NavEnv {
    /// Environment for a task name such as `"Fixed_obs_NT"`.
    #[new]
    #[pyo3(signature = (task, seed = 0))]
    fn new(task: &str, seed: u64) -> PyResult<Self> {
        let t: Task = task.parse().map_err(py_err)?;
        let cfg = env::EnvConfig { rng_seed: seed, ..env::make_task(t) };
        Ok(Self { inner: env::NavEnv::new(cfg).map_err(py_err)? })
    }

    fn reset(&mut self) -> PyResult<Vec<f64>> {
        self.inner.reset().map_err(py_err)
    }

    /// `(obs, reward, cost, done, outcome)`.
    fn step(&mut self, action: usize) -> PyResult<(Vec<f64>, f64, f64, bool, &'static str)> {
        let r = self.inner.step(action).map_err(py_err)?;
        let outcome = match r.outcome {
            Outcome::Running => "running",
            Outcome::GoalReached => "goal",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
        };
        let cost = r.cost();
        Ok((r.obs, r.reward, cost, r.done, outcome))
    }

    /// `(x, y, theta)`.
    #[getter]
    fn pose(&self) -> (f64, f64, f64) {
        let p = self.inner.pose();
        (p.x, p.y, p.theta)
    }

    #[getter]
    fn goal(&self) -> (f64, f64) {
        let g = self.inner.goal();
        (g[0], g[1])
    }
}

/// Reward minus `omega` times the cost flag or the violation.
#[pyfunction]
#[pyo3(signature = (reward, cost, violation, mode, omega = 1.0))]
fn apply_penalty(reward: f64, cost: f64, violation: f64, mode: &str, omega: f64) -> PyResult<f64> {
    let mode: PenaltyMode = mode.parse().map_err(py_err)?;
    algos::apply_penalty(reward, cost, violation, mode, omega).map_err(py_err)
}

/// Generalized advantage estimates: `(advantages, returns)`.
#[pyfunction]
#[pyo3(signature = (rewards, values, dones, bootstrap = 0.0, gamma = 0.9, lam = 0.97))]
fn gae(
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
    bootstrap: f64,
    gamma: f64,
    lam: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    algos::gae(&rewards, &values, &dones, bootstrap, gamma, lam).map_err(py_err)
}

#[pymodule]
fn pyapproxviol(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Mlp>()?;
    m.add_class::<PropertySet>()?;
    m.add_class::<NavEnv>()?;
    m.add_function(wrap_pyfunction!(approximate_violation, m)?)?;
    m.add_function(wrap_pyfunction!(formal_violation, m)?)?;
    m.add_function(wrap_pyfunction!(apply_penalty, m)?)?;
    m.add_function(wrap_pyfunction!(gae, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
