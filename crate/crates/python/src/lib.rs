//! Python bindings. Category labels are 1-based on this side, matching the
//! CLI and the `Display` form of policies.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use departing_bandits::environment::{run_stream, ConstantLearner, Simulator};
use departing_bandits::experiment::{self, ExperimentConfig, PolicySetKind};
use departing_bandits::{dp, learning, oracle, planning, structure, Error};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        other => PyValueError::new_err(format!("{}: {other}", other.kind())),
    }
}

fn label(a: usize) -> PyResult<usize> {
    a.checked_sub(1)
        .ok_or_else(|| PyValueError::new_err("categories are numbered from 1"))
}

#[pyclass(
    name = "Instance",
    module = "departing_bandits_py",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyInstance {
    inner: departing_bandits::Instance,
}

#[pymethods]
impl PyInstance {
    /// `P` and `L` are indexed `[category][type]`; `L` defaults to all ones.
    #[new]
    #[pyo3(signature = (q, P, L=None, epsilon=None))]
    #[allow(non_snake_case)]
    fn new(
        q: Vec<f64>,
        P: Vec<Vec<f64>>,
        L: Option<Vec<Vec<f64>>>,
        epsilon: Option<f64>,
    ) -> PyResult<Self> {
        let inner = match L {
            Some(l) => departing_bandits::Instance::new(q, P, l, epsilon),
            None => departing_bandits::Instance::with_unit_departure(q, P, epsilon),
        }
        .map_err(to_py)?;
        Ok(PyInstance { inner })
    }

    #[staticmethod]
    fn table1() -> Self {
        PyInstance {
            inner: departing_bandits::Instance::table1(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyInstance {
            inner: departing_bandits::Instance::from_json_str(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyInstance {
            inner: departing_bandits::Instance::from_path(path).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json_string().map_err(to_py)
    }

    #[getter]
    fn num_types(&self) -> usize {
        self.inner.num_types()
    }

    #[getter]
    fn num_categories(&self) -> usize {
        self.inner.num_categories()
    }

    #[getter]
    fn prior(&self) -> Vec<f64> {
        self.inner.prior().to_vec()
    }

    #[getter]
    fn click(&self) -> Vec<Vec<f64>> {
        self.inner.click_matrix().to_vec()
    }

    #[getter]
    fn depart(&self) -> Vec<Vec<f64>> {
        self.inner.depart_matrix().to_vec()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(K={}, M={}, epsilon={})",
            self.inner.num_categories(),
            self.inner.num_types(),
            self.inner.epsilon()
        )
    }
}

#[pyclass(
    name = "Policy",
    module = "departing_bandits_py",
    frozen,
    eq,
    skip_from_py_object
)]
#[derive(Clone, PartialEq)]
struct PyPolicy {
    inner: departing_bandits::Policy,
}

#[pymethods]
impl PyPolicy {
    /// `prefix` then `tail` forever.
    #[new]
    fn new(prefix: Vec<usize>, tail: usize) -> PyResult<Self> {
        let prefix = prefix
            .into_iter()
            .map(label)
            .collect::<PyResult<Vec<_>>>()?;
        Ok(PyPolicy {
            inner: departing_bandits::Policy::new(prefix, label(tail)?),
        })
    }

    #[staticmethod]
    fn fixed(category: usize) -> PyResult<Self> {
        Ok(PyPolicy {
            inner: departing_bandits::Policy::fixed(label(category)?),
        })
    }

    #[staticmethod]
    fn threshold(first: usize, h: usize) -> PyResult<Self> {
        Ok(PyPolicy {
            inner: departing_bandits::Policy::threshold(label(first)?, h).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyPolicy {
            inner: departing_bandits::Policy::parse(text).map_err(to_py)?,
        })
    }

    fn schedule(&self, length: usize) -> Vec<usize> {
        self.inner
            .schedule(length)
            .into_iter()
            .map(|a| a + 1)
            .collect()
    }

    /// `(first, h)` if this is a threshold policy with `h >= 1`.
    fn as_threshold(&self) -> Option<(usize, usize)> {
        self.inner.as_threshold().map(|(a, h)| (a + 1, h))
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Policy({})", self.inner)
    }
}

/// One of `DominantRow`, `DominantColumn`, `DominantDiagonal`.
#[pyfunction]
fn classify(instance: &PyInstance) -> PyResult<String> {
    Ok(structure::classify(&instance.inner)
        .map_err(to_py)?
        .to_string())
}

type PlanTuple = (String, PyPolicy, f64, Vec<(PyPolicy, f64)>);

/// Exact optimum of a 2x2 unit-departure or single-type instance:
/// `(structure, policy, value, [(candidate, value), ...])`.
#[pyfunction]
fn optimal_policy(instance: &PyInstance) -> PyResult<PlanTuple> {
    let inst = &instance.inner;
    if inst.num_types() == 1 {
        let (arm, value) = planning::single_type_optimal_arm(inst).map_err(to_py)?;
        let policy = PyPolicy {
            inner: departing_bandits::Policy::fixed(arm),
        };
        return Ok((
            "SingleType".to_string(),
            policy.clone(),
            value,
            vec![(policy, value)],
        ));
    }
    let plan = planning::optimal_policy_2x2(inst).map_err(to_py)?;
    let candidates = plan
        .candidates
        .into_iter()
        .map(|c| (PyPolicy { inner: c.policy }, c.value))
        .collect();
    Ok((
        plan.structure.variant.to_string(),
        PyPolicy { inner: plan.policy },
        plan.value,
        candidates,
    ))
}

/// Exact expected return of any policy.
#[pyfunction]
fn policy_value(instance: &PyInstance, policy: &PyPolicy) -> PyResult<f64> {
    planning::policy_value(&instance.inner, &policy.inner).map_err(to_py)
}

/// Expected clicks within the first `horizon` recommendations.
#[pyfunction]
fn truncated_value(instance: &PyInstance, policy: &PyPolicy, horizon: usize) -> PyResult<f64> {
    let b = planning::Belief::new(instance.inner.prior()[0]).map_err(to_py)?;
    planning::expected_return_truncated(&instance.inner, &policy.inner, b, horizon)
        .map(|t| t.value)
        .map_err(to_py)
}

/// `(actions, value)` of the finite-horizon dynamic program.
#[pyfunction]
fn dp_plan(instance: &PyInstance, horizon: usize) -> PyResult<(Vec<usize>, f64)> {
    let plan = dp::dp_plan(&instance.inner, horizon).map_err(to_py)?;
    Ok((
        plan.actions.into_iter().map(|a| a + 1).collect(),
        plan.value,
    ))
}

#[pyfunction]
fn brute_force_value(instance: &PyInstance, policy: &PyPolicy, horizon: usize) -> PyResult<f64> {
    oracle::brute_force_value(&instance.inner, &policy.inner, horizon).map_err(to_py)
}

#[pyfunction]
fn grid_search_threshold(instance: &PyInstance, max_switch: usize) -> PyResult<(PyPolicy, f64)> {
    let (policy, value) =
        oracle::grid_search_threshold(&instance.inner, max_switch).map_err(to_py)?;
    Ok((PyPolicy { inner: policy }, value))
}

/// `(mean, stderr)` of simulated returns.
#[pyfunction]
#[pyo3(signature = (instance, policy, episodes, seed=0))]
fn monte_carlo_value(
    py: Python<'_>,
    instance: &PyInstance,
    policy: &PyPolicy,
    episodes: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let sim = Simulator::new(instance.inner.clone());
    let est = py
        .detach(|| oracle::monte_carlo_value(&sim, &policy.inner, episodes, seed))
        .map_err(to_py)?;
    Ok((est.mean, est.stderr))
}

/// `(return, length)` for each of `episodes` users.
#[pyfunction]
#[pyo3(signature = (instance, policy, episodes, seed=0))]
fn simulate(
    instance: &PyInstance,
    policy: &PyPolicy,
    episodes: usize,
    seed: u64,
) -> PyResult<Vec<(u64, u64)>> {
    let sim = Simulator::new(instance.inner.clone());
    let mut learner = ConstantLearner::new(policy.inner.clone());
    let trace = run_stream(&sim, &mut learner, episodes, seed).map_err(to_py)?;
    Ok(trace
        .episodes
        .iter()
        .map(|e| (e.outcome.return_clicks, e.outcome.length))
        .collect())
}

#[pyfunction]
fn threshold_policy_set(max_switch: usize) -> Vec<PyPolicy> {
    learning::build_threshold_policy_set(max_switch)
        .into_iter()
        .map(|inner| PyPolicy { inner })
        .collect()
}

#[pyfunction]
fn horizon_for_t(num_users: usize, epsilon: f64) -> PyResult<usize> {
    learning::horizon_for_t(num_users, epsilon).map_err(to_py)
}

/// Runs UCB-Hybrid for each seed and returns the seed-averaged realized and
/// pseudo-regret curves.
#[pyfunction]
#[pyo3(signature = (instance, num_users, seeds=20, policy_set="threshold", horizon=None))]
fn run_experiment(
    py: Python<'_>,
    instance: &PyInstance,
    num_users: usize,
    seeds: u64,
    policy_set: &str,
    horizon: Option<usize>,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let kind: PolicySetKind = policy_set.parse().map_err(to_py)?;
    let mut config = ExperimentConfig::new(num_users, seeds, kind);
    config.horizon = horizon;
    let result = py
        .detach(|| experiment::run_experiment(&instance.inner, &config))
        .map_err(to_py)?;
    Ok((result.mean_regret(), result.mean_pseudo_regret()))
}

#[pymodule]
fn departing_bandits_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_policy, m)?)?;
    m.add_function(wrap_pyfunction!(policy_value, m)?)?;
    m.add_function(wrap_pyfunction!(truncated_value, m)?)?;
    m.add_function(wrap_pyfunction!(dp_plan, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_value, m)?)?;
    m.add_function(wrap_pyfunction!(grid_search_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_value, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_policy_set, m)?)?;
    m.add_function(wrap_pyfunction!(horizon_for_t, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
