//! Python bindings: `import evfb`.

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use evfb_core::codebook::{self, Codebook, EpsStats};
use evfb_core::mdp::{self, ControlProblem, Policy, RewardSpec, SolveResult};
use evfb_core::rng::seeded;
use evfb_core::simulator::{
    self, EvalResult, QuantizedFeedback, TrajectoryConfig, DEFAULT_WARMUP, MAX_POLICY_ITERATIONS,
};
use evfb_core::state_grid::{self, GridSpec, ModelDocument, TransitionModel};
use evfb_core::{special, FadingParams};

create_exception!(evfb, NumericalError, PyException);

fn err(e: evfb_core::Error) -> PyErr {
    use evfb_core::Error as E;
    match e {
        E::InvalidDimension(_)
        | E::DimensionMismatch { .. }
        | E::InvalidParameter(_)
        | E::NonFinite(_)
        | E::NotStochastic { .. }
        | E::MissingEpsilon { .. }
        | E::SearchTooLarge { .. }
        | E::Json(_)
        | E::Io(_) => PyValueError::new_err(e.to_string()),
        _ => NumericalError::new_err(e.to_string()),
    }
}

/// Quantized (ĝ, ẑ) state grid.
#[pyclass(name = "GridSpec", module = "evfb", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGridSpec(GridSpec);

#[pymethods]
impl PyGridSpec {
    #[new]
    fn new(antennas: usize, m: usize, n: usize) -> PyResult<Self> {
        GridSpec::new(antennas, m, n).map(Self).map_err(err)
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    #[getter]
    fn g_edges(&self) -> Vec<f64> {
        self.0.g_edges.clone()
    }

    #[getter]
    fn g_points(&self) -> Vec<f64> {
        self.0.g_points.clone()
    }

    #[getter]
    fn z_edges(&self) -> Vec<f64> {
        self.0.z_edges.clone()
    }

    #[getter]
    fn z_points(&self) -> Vec<f64> {
        self.0.z_points.clone()
    }

    /// (m, n) bin of a continuous state.
    fn quantize(&self, g: f64, z: f64) -> PyResult<(usize, usize)> {
        state_grid::quantize_state(g, z, &self.0).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("GridSpec(m={}, n={})", self.0.m, self.0.n)
    }
}

#[pyclass(name = "TransitionModel", module = "evfb", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTransitionModel(TransitionModel);

#[pymethods]
impl PyTransitionModel {
    #[getter]
    fn ptilde(&self) -> Vec<Vec<f64>> {
        self.0.ptilde.clone()
    }

    #[getter]
    fn p0(&self) -> Vec<Vec<f64>> {
        self.0.p0.clone()
    }

    #[getter]
    fn p1_row(&self) -> Vec<f64> {
        self.0.p1_row.clone()
    }

    #[getter]
    fn peps1_row(&self) -> Option<Vec<f64>> {
        self.0.peps1_row.clone()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.0.warnings.clone()
    }

    fn to_json(&self, spec: &PyGridSpec) -> PyResult<String> {
        ModelDocument::new(&spec.0, &self.0).to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<(PyGridSpec, PyTransitionModel)> {
        let (spec, model) = ModelDocument::from_json(text).map_err(err)?;
        Ok((PyGridSpec(spec), PyTransitionModel(model)))
    }
}

#[pyclass(name = "Codebook", module = "evfb", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCodebook(Codebook);

#[pymethods]
impl PyCodebook {
    #[new]
    fn new(vectors: Vec<Vec<Complex64>>) -> PyResult<Self> {
        Codebook::new(vectors, "custom").map(Self).map_err(err)
    }

    #[getter]
    fn size(&self) -> usize {
        self.0.size()
    }

    #[getter]
    fn antennas(&self) -> usize {
        self.0.antennas()
    }

    #[getter]
    fn method(&self) -> String {
        self.0.method.clone()
    }

    #[getter]
    fn vectors(&self) -> Vec<Vec<Complex64>> {
        self.0.vectors.clone()
    }

    /// (index, ε) of the best codeword for shape `s`.
    fn nearest(&self, s: Vec<Complex64>) -> PyResult<(usize, f64)> {
        if s.len() != self.0.antennas() {
            return Err(err(evfb_core::Error::DimensionMismatch { expected: self.0.antennas(), found: s.len() }));
        }
        Ok(self.0.nearest(&s))
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Codebook::from_json(text).map(Self).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.size()
    }
}

#[pyclass(name = "EpsStats", module = "evfb", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyEpsStats(EpsStats);

#[pymethods]
impl PyEpsStats {
    #[staticmethod]
    fn perfect(snr: f64, spec: &PyGridSpec) -> Self {
        Self(EpsStats::perfect(snr, &spec.0.g_points))
    }

    #[getter]
    fn mean_eps(&self) -> f64 {
        self.0.mean_eps
    }

    #[getter]
    fn mean_log2_eps(&self) -> f64 {
        self.0.mean_log2_eps
    }

    #[getter]
    fn per_g_rate(&self) -> Vec<f64> {
        self.0.per_g_rate.clone()
    }

    #[getter]
    fn stderr_eps(&self) -> f64 {
        self.0.stderr_eps
    }
}

#[pyclass(name = "SolveResult", module = "evfb", frozen)]
struct PySolveResult(SolveResult);

#[pymethods]
impl PySolveResult {
    #[getter]
    fn j(&self) -> f64 {
        self.0.j
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }

    /// Feedback decisions indexed [m][n].
    #[getter]
    fn policy(&self) -> Vec<Vec<bool>> {
        self.0.policy.decide.clone()
    }

    #[getter]
    fn threshold(&self) -> Vec<f64> {
        self.0.threshold.y.clone()
    }

    #[getter]
    fn is_threshold(&self) -> bool {
        self.0.threshold.is_threshold
    }

    #[getter]
    fn pi(&self) -> Vec<Vec<f64>> {
        self.0.pi.pi.clone()
    }

    #[getter]
    fn relative_values(&self) -> Vec<Vec<f64>> {
        self.0.a.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }
}

fn eval_dict<'py>(py: Python<'py>, r: &EvalResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("throughput", r.throughput)?;
    d.set_item("feedback_rate", r.feedback_rate)?;
    d.set_item("net", r.net)?;
    d.set_item("stderr", r.stderr)?;
    Ok(d)
}

#[pyfunction]
fn bessel_j0(x: f64) -> PyResult<f64> {
    special::bessel_j0(x).map_err(err)
}

/// Slot-to-slot correlation ρ for normalized Doppler `doppler`.
#[pyfunction]
fn correlation(antennas: usize, doppler: f64) -> PyResult<f64> {
    Ok(FadingParams::new(antennas, doppler).map_err(err)?.rho)
}

#[pyfunction]
fn threshold_lower_bound(gbar: f64, snr: f64, alpha: f64) -> f64 {
    mdp::threshold_lower_bound(gbar, snr, alpha)
}

#[pyfunction]
#[pyo3(signature = (spec, antennas, doppler, samples, seed, codebook=None))]
fn estimate_model(
    py: Python<'_>,
    spec: &PyGridSpec,
    antennas: usize,
    doppler: f64,
    samples: usize,
    seed: u64,
    codebook: Option<&PyCodebook>,
) -> PyResult<PyTransitionModel> {
    let params = FadingParams::new(antennas, doppler).map_err(err)?;
    let cb = codebook.map(|c| &c.0);
    py.detach(|| state_grid::estimate_transition_model(&params, &spec.0, samples, seed, cb))
        .map(PyTransitionModel)
        .map_err(err)
}

#[pyfunction]
fn random_codebook(antennas: usize, size: usize, seed: u64) -> PyResult<PyCodebook> {
    codebook::random_codebook(antennas, size, &mut seeded(seed)).map(PyCodebook).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (antennas, size, seed, training=100_000, iterations=50))]
fn lloyd_codebook(
    py: Python<'_>,
    antennas: usize,
    size: usize,
    seed: u64,
    training: usize,
    iterations: usize,
) -> PyResult<PyCodebook> {
    py.detach(|| codebook::lloyd_codebook(antennas, size, training, iterations, &mut seeded(seed)))
        .map(PyCodebook)
        .map_err(err)
}

#[pyfunction]
fn epsilon_statistics(
    py: Python<'_>,
    codebook: &PyCodebook,
    snr: f64,
    spec: &PyGridSpec,
    samples: usize,
    seed: u64,
) -> PyResult<PyEpsStats> {
    py.detach(|| codebook::epsilon_statistics(&codebook.0, snr, &spec.0.g_points, samples, &mut seeded(seed)))
        .map(PyEpsStats)
        .map_err(err)
}

fn problem(
    spec: &PyGridSpec,
    model: &PyTransitionModel,
    snr: f64,
    alpha: f64,
    eps: Option<&PyEpsStats>,
) -> PyResult<ControlProblem> {
    let rewards = RewardSpec::new(snr, alpha).map_err(err)?;
    match eps {
        Some(e) => ControlProblem::quantized(&spec.0, &model.0, &rewards, &e.0),
        None => ControlProblem::perfect(&spec.0, &model.0, &rewards),
    }
    .map_err(err)
}

/// Average-reward optimal feedback policy by policy iteration.
#[pyfunction]
#[pyo3(signature = (spec, model, snr, alpha, eps=None, max_iter=MAX_POLICY_ITERATIONS))]
fn solve(
    spec: &PyGridSpec,
    model: &PyTransitionModel,
    snr: f64,
    alpha: f64,
    eps: Option<&PyEpsStats>,
    max_iter: usize,
) -> PyResult<PySolveResult> {
    let p = problem(spec, model, snr, alpha, eps)?;
    mdp::policy_iteration_average(&p, max_iter).map(PySolveResult).map_err(err)
}

/// Long-run reward of an arbitrary [m][n] feedback table on the model.
#[pyfunction]
#[pyo3(signature = (policy, spec, model, snr, alpha, eps=None))]
fn average_reward(
    policy: Vec<Vec<bool>>,
    spec: &PyGridSpec,
    model: &PyTransitionModel,
    snr: f64,
    alpha: f64,
    eps: Option<&PyEpsStats>,
) -> PyResult<f64> {
    let p = problem(spec, model, snr, alpha, eps)?;
    mdp::average_reward(&Policy { decide: policy }, &p).map_err(err)
}

/// Run a policy on the true fading channel.
#[pyfunction]
#[pyo3(signature = (policy, spec, antennas, doppler, snr, alpha, slots, seed, warmup=DEFAULT_WARMUP, codebook=None))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    policy: Vec<Vec<bool>>,
    spec: &PyGridSpec,
    antennas: usize,
    doppler: f64,
    snr: f64,
    alpha: f64,
    slots: usize,
    seed: u64,
    warmup: usize,
    codebook: Option<&PyCodebook>,
) -> PyResult<Bound<'py, PyDict>> {
    let params = FadingParams::new(antennas, doppler).map_err(err)?;
    let rewards = RewardSpec::new(snr, alpha).map_err(err)?;
    let config = TrajectoryConfig::new(slots, warmup, seed).map_err(err)?;
    let policy = Policy { decide: policy };
    let cb = codebook.map(|c| &c.0);
    let r = py.detach(|| simulator::simulate_policy(&policy, &spec.0, &params, &rewards, &config, cb)).map_err(err)?;
    eval_dict(py, &r)
}

/// Optimal controlled curve over `alphas`, one dict per price.
#[pyfunction]
#[pyo3(signature = (alphas, spec, model, antennas, doppler, snr, slots, seed, warmup=DEFAULT_WARMUP, codebook=None, eps=None))]
#[allow(clippy::too_many_arguments)]
fn sweep<'py>(
    py: Python<'py>,
    alphas: Vec<f64>,
    spec: &PyGridSpec,
    model: &PyTransitionModel,
    antennas: usize,
    doppler: f64,
    snr: f64,
    slots: usize,
    seed: u64,
    warmup: usize,
    codebook: Option<&PyCodebook>,
    eps: Option<&PyEpsStats>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let params = FadingParams::new(antennas, doppler).map_err(err)?;
    let template = RewardSpec::new(snr, 0.0).map_err(err)?;
    let config = TrajectoryConfig::new(slots, warmup, seed).map_err(err)?;
    let quantized = match (codebook, eps) {
        (Some(c), Some(e)) => Some(QuantizedFeedback { codebook: &c.0, eps: &e.0 }),
        (None, None) => None,
        _ => return Err(PyValueError::new_err("codebook and eps must be given together")),
    };
    let curve = py
        .detach(|| simulator::sweep_alpha(&alphas, &spec.0, &model.0, &params, &template, &config, quantized))
        .map_err(err)?;
    curve
        .points
        .iter()
        .map(|p| {
            let d = PyDict::new(py);
            d.set_item("alpha", p.alpha)?;
            d.set_item("net", p.net)?;
            d.set_item("throughput", p.throughput)?;
            d.set_item("feedback_rate", p.feedback_rate)?;
            d.set_item("avg_threshold", p.avg_threshold)?;
            d.set_item("stderr", p.stderr)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn evfb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<PyGridSpec>()?;
    m.add_class::<PyTransitionModel>()?;
    m.add_class::<PyCodebook>()?;
    m.add_class::<PyEpsStats>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(bessel_j0, m)?)?;
    m.add_function(wrap_pyfunction!(correlation, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_model, m)?)?;
    m.add_function(wrap_pyfunction!(random_codebook, m)?)?;
    m.add_function(wrap_pyfunction!(lloyd_codebook, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_statistics, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(average_reward, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
