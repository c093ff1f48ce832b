//! Python bindings: module `pyweakmeas`.
//!
//! Matrices cross the boundary as nested lists of Python `complex`;
//! library errors surface as `ValueError`.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use weakmeas::classical::{ClassicalState, PhaseFunction};
use weakmeas::ensemble::{self, CollapseHistogram, ExperimentReport};
use weakmeas::linalg::{CMatrix, HermitianMatrix};
use weakmeas::quantum::{self, AnomalySetup, DensityOperator, Observable};
use weakmeas::rng::SeededRng;
use weakmeas::trajectories::{self, ContinuousMeasurementConfig, QuantumIntegrator, TrajectoryRecord};

type Rows = Vec<Vec<Complex64>>;

fn err(e: weakmeas::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows(m: &CMatrix) -> Rows {
    m.as_slice().chunks(m.dim()).map(<[Complex64]>::to_vec).collect()
}

fn matrix(r: &Rows) -> PyResult<CMatrix> {
    CMatrix::from_rows(r).map_err(err)
}

#[pyclass(name = "ClassicalState", frozen)]
struct PyClassicalState(ClassicalState);

#[pymethods]
impl PyClassicalState {
    /// Weights are normalized to unit sum.
    #[new]
    fn new(weights: Vec<f64>) -> PyResult<Self> {
        ClassicalState::normalized(weights).map(Self).map_err(err)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("ClassicalState({:?})", self.0.weights())
    }
}

#[pyclass(name = "Observable", frozen)]
struct PyObservable(Observable);

#[pymethods]
impl PyObservable {
    #[new]
    fn new(rows: Rows) -> PyResult<Self> {
        let h = HermitianMatrix::new(matrix(&rows)?).map_err(err)?;
        Observable::new(h).map(Self).map_err(err)
    }

    #[staticmethod]
    fn diagonal(values: Vec<f64>) -> PyResult<Self> {
        Observable::diagonal(&values).map(Self).map_err(err)
    }

    #[staticmethod]
    fn pauli_x() -> Self {
        Self(Observable::pauli_x())
    }

    #[staticmethod]
    fn pauli_z() -> Self {
        Self(Observable::pauli_z())
    }

    #[staticmethod]
    fn projector(ket: Vec<Complex64>) -> PyResult<Self> {
        Observable::projector(&ket).map(Self).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn matrix(&self) -> Rows {
        rows(self.0.matrix())
    }

    /// Distinct eigenvalues, ascending.
    fn eigenvalues(&self) -> Vec<f64> {
        self.0.spectrum().eigenvalues().to_vec()
    }
}

#[pyclass(name = "DensityOperator", frozen)]
struct PyDensityOperator(DensityOperator);

#[pymethods]
impl PyDensityOperator {
    #[new]
    fn new(rows: Rows) -> PyResult<Self> {
        DensityOperator::new(matrix(&rows)?).map(Self).map_err(err)
    }

    #[staticmethod]
    fn pure(ket: Vec<Complex64>) -> PyResult<Self> {
        DensityOperator::pure(&ket).map(Self).map_err(err)
    }

    #[staticmethod]
    fn diagonal(weights: Vec<f64>) -> PyResult<Self> {
        DensityOperator::diagonal(&weights).map(Self).map_err(err)
    }

    #[staticmethod]
    fn maximally_mixed(dim: usize) -> Self {
        Self(DensityOperator::maximally_mixed(dim))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn matrix(&self) -> Rows {
        rows(self.0.matrix())
    }

    fn purity(&self) -> f64 {
        self.0.purity()
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.0.eigenvalues()
    }

    fn mean(&self, obs: &PyObservable) -> PyResult<f64> {
        quantum::quantum_mean(&self.0, &obs.0).map_err(err)
    }

    fn born_probabilities(&self, obs: &PyObservable) -> PyResult<Vec<f64>> {
        quantum::born_probabilities(&self.0, &obs.0).map_err(err)
    }
}

#[pyclass(name = "ExperimentReport", frozen, get_all)]
struct PyExperimentReport {
    accepted_count: usize,
    acceptance_rate: f64,
    mean: f64,
    stderr: f64,
    predicted_mean: f64,
    predicted_delta: f64,
    z_score: f64,
}

impl From<ExperimentReport> for PyExperimentReport {
    fn from(r: ExperimentReport) -> Self {
        Self {
            accepted_count: r.accepted_count,
            acceptance_rate: r.acceptance_rate,
            mean: r.mean,
            stderr: r.stderr,
            predicted_mean: r.predicted_mean,
            predicted_delta: r.predicted_delta,
            z_score: r.z_score,
        }
    }
}

#[pyclass(name = "CollapseHistogram", frozen, get_all)]
struct PyCollapseHistogram {
    eigenvalues: Vec<f64>,
    counts: Vec<usize>,
    frequencies: Vec<f64>,
    predicted: Vec<f64>,
    predicted_stderr: Vec<f64>,
    converged: usize,
    total: usize,
}

impl From<CollapseHistogram> for PyCollapseHistogram {
    fn from(h: CollapseHistogram) -> Self {
        Self {
            eigenvalues: h.eigenvalues,
            counts: h.counts,
            frequencies: h.frequencies,
            predicted: h.predicted,
            predicted_stderr: h.predicted_stderr,
            converged: h.converged,
            total: h.total,
        }
    }
}

/// Recorded trajectory; `states` holds weight vectors (classical) or
/// matrices (quantum).
#[pyclass(name = "Trajectory", frozen, get_all)]
struct PyTrajectory {
    times: Vec<f64>,
    alpha: Vec<f64>,
    states: Py<PyAny>,
    min_raw_purity: f64,
    max_repair: f64,
}

fn trajectory<S>(py: Python<'_>, rec: TrajectoryRecord<S>, f: impl Fn(&S) -> Py<PyAny>) -> PyTrajectory {
    let states: Vec<Py<PyAny>> = rec.states.iter().map(f).collect();
    PyTrajectory {
        times: rec.times,
        alpha: rec.alpha,
        states: states.into_pyobject(py).expect("list conversion").into_any().unbind(),
        min_raw_purity: rec.repair.min_raw_purity,
        max_repair: rec.repair.max_repair,
    }
}

fn continuous(
    g2: f64,
    dt: Option<f64>,
    t_final: f64,
    record_every: usize,
    integrator: &str,
) -> PyResult<ContinuousMeasurementConfig> {
    let integrator = match integrator {
        "kraus" => QuantumIntegrator::Kraus,
        "euler-maruyama" => QuantumIntegrator::EulerMaruyama,
        other => return Err(PyValueError::new_err(format!("unknown integrator {other:?}"))),
    };
    let cfg = ContinuousMeasurementConfig::new(g2, dt.unwrap_or(1e-3 * g2), t_final, record_every).map_err(err)?;
    Ok(cfg.with_integrator(integrator))
}

/// Weak value `⟨f|Â|i⟩ / ⟨f|i⟩` for pure pre- and postselected states.
#[pyfunction]
fn weak_value(initial: Vec<Complex64>, fin: Vec<Complex64>, obs: &PyObservable) -> PyResult<Complex64> {
    quantum::complex_weak_value_kets(&initial, &fin, &obs.0).map_err(err)
}

#[pyfunction]
fn postselection_rate(rho: &PyDensityOperator, sel: &PyObservable) -> PyResult<f64> {
    quantum::postselection_rate(&rho.0, &sel.0).map_err(err)
}

#[pyfunction]
fn pseudo_state(rho: &PyDensityOperator, sel: &PyObservable) -> PyResult<Rows> {
    quantum::pseudo_state(&rho.0, &sel.0)
        .map(|p| rows(p.matrix()))
        .map_err(err)
}

/// `(initial, postselector, observable)` of the tilted-qubit anomaly setup.
#[pyfunction]
fn anomaly_setup(phi: f64) -> (PyDensityOperator, PyObservable, PyObservable) {
    let s = AnomalySetup::new(phi);
    (
        PyDensityOperator(s.initial),
        PyObservable(s.postselector),
        PyObservable(s.observable),
    )
}

#[pyfunction]
#[pyo3(signature = (phi, sigma, n, seed=0))]
fn run_anomaly_experiment(py: Python<'_>, phi: f64, sigma: f64, n: usize, seed: u64) -> PyResult<PyExperimentReport> {
    py.detach(|| ensemble::run_anomaly_experiment(phi, sigma, n, seed))
        .map(Into::into)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (weights, values, sigma, n, seed=0))]
fn run_weak_limit(
    py: Python<'_>,
    weights: Vec<f64>,
    values: Vec<f64>,
    sigma: f64,
    n: usize,
    seed: u64,
) -> PyResult<PyExperimentReport> {
    let state = ClassicalState::normalized(weights).map_err(err)?;
    let f = PhaseFunction::new(values);
    let plan = ensemble::WeakLimitPlan::new(sigma, n).map_err(err)?;
    py.detach(|| ensemble::run_weak_limit_classical(&state, &f, &plan, seed))
        .map(Into::into)
        .map_err(err)
}

/// Closed-form decoherence of `rho` under continuous measurement of `obs`.
#[pyfunction]
fn decoherence_evolve(rho: &PyDensityOperator, obs: &PyObservable, g2: f64, t: f64) -> PyResult<PyDensityOperator> {
    trajectories::decoherence_evolve(&rho.0, &obs.0, g2, t)
        .map(PyDensityOperator)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (rho, obs, t_final, g2=1.0, dt=None, record_every=1, seed=0, integrator="kraus"))]
#[allow(clippy::too_many_arguments)]
fn quantum_trajectory(
    py: Python<'_>,
    rho: &PyDensityOperator,
    obs: &PyObservable,
    t_final: f64,
    g2: f64,
    dt: Option<f64>,
    record_every: usize,
    seed: u64,
    integrator: &str,
) -> PyResult<PyTrajectory> {
    let cfg = continuous(g2, dt, t_final, record_every, integrator)?;
    let mut rng = SeededRng::new(seed);
    let rec = py
        .detach(|| trajectories::quantum_trajectory(&rho.0, &obs.0, &cfg, &mut rng))
        .map_err(err)?;
    Ok(trajectory(py, rec, |s| {
        rows(s.matrix())
            .into_pyobject(py)
            .expect("list conversion")
            .into_any()
            .unbind()
    }))
}

#[pyfunction]
#[pyo3(signature = (state, values, t_final, g2=1.0, dt=None, record_every=1, seed=0))]
#[allow(clippy::too_many_arguments)]
fn classical_trajectory(
    py: Python<'_>,
    state: &PyClassicalState,
    values: Vec<f64>,
    t_final: f64,
    g2: f64,
    dt: Option<f64>,
    record_every: usize,
    seed: u64,
) -> PyResult<PyTrajectory> {
    let cfg = continuous(g2, dt, t_final, record_every, "kraus")?;
    let f = PhaseFunction::new(values);
    let mut rng = SeededRng::new(seed);
    let rec = py
        .detach(|| trajectories::classical_trajectory(&state.0, &f, &cfg, &mut rng))
        .map_err(err)?;
    Ok(trajectory(py, rec, |s| {
        s.weights()
            .to_vec()
            .into_pyobject(py)
            .expect("list conversion")
            .into_any()
            .unbind()
    }))
}

#[pyfunction]
#[pyo3(signature = (rho, obs, n_traj, t_final=50.0, g2=1.0, dt=None, seed=0, integrator="kraus"))]
#[allow(clippy::too_many_arguments)]
fn collapse_statistics(
    py: Python<'_>,
    rho: &PyDensityOperator,
    obs: &PyObservable,
    n_traj: usize,
    t_final: f64,
    g2: f64,
    dt: Option<f64>,
    seed: u64,
    integrator: &str,
) -> PyResult<PyCollapseHistogram> {
    let steps = ((t_final / dt.unwrap_or(1e-3 * g2)).round() as usize).max(1);
    let cfg = continuous(g2, dt, t_final, steps, integrator)?;
    py.detach(|| ensemble::run_collapse_statistics(&rho.0, &obs.0, &cfg, n_traj, seed))
        .map(Into::into)
        .map_err(err)
}

#[pyfunction]
fn derive_run_seed(master_seed: u64, run_index: u64) -> u64 {
    weakmeas::rng::derive_run_seed(master_seed, run_index)
}

#[pymodule]
fn pyweakmeas(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyClassicalState>()?;
    m.add_class::<PyObservable>()?;
    m.add_class::<PyDensityOperator>()?;
    m.add_class::<PyExperimentReport>()?;
    m.add_class::<PyCollapseHistogram>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(weak_value, m)?)?;
    m.add_function(wrap_pyfunction!(postselection_rate, m)?)?;
    m.add_function(wrap_pyfunction!(pseudo_state, m)?)?;
    m.add_function(wrap_pyfunction!(anomaly_setup, m)?)?;
    m.add_function(wrap_pyfunction!(run_anomaly_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_weak_limit, m)?)?;
    m.add_function(wrap_pyfunction!(decoherence_evolve, m)?)?;
    m.add_function(wrap_pyfunction!(quantum_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(classical_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(collapse_statistics, m)?)?;
    m.add_function(wrap_pyfunction!(derive_run_seed, m)?)?;
    Ok(())
}
