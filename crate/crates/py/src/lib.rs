//! Python bindings. Angles cross the boundary as radians; sets are built
//! from `(lo, hi)` radian pairs.

use ::ellipslice::circle::IntervalKind;
use ::ellipslice::verify::{known_tests, run_named, SuiteOptions};
use ::ellipslice::{
    reflect_interval, Angle, ArcSet, CovarianceSpec, GeneralizedInterval, Likelihood, RngStream, ShrinkConfig,
    ShrinkOutcome, TargetModel, Variant,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: ::ellipslice::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_kind(kind: &str) -> PyResult<IntervalKind> {
    match kind {
        "I" | "i" => Ok(IntervalKind::I),
        "J" | "j" => Ok(IntervalKind::J),
        "open" => Ok(IntervalKind::Open),
        other => Err(PyValueError::new_err(format!(
            "interval kind must be 'I', 'J' or 'open', got {other:?}"
        ))),
    }
}

fn parse_variant(name: &str) -> PyResult<Variant> {
    name.parse().map_err(err)
}

fn shrink_config(cap: usize, fallback_to_anchor: bool) -> ShrinkConfig {
    ShrinkConfig {
        cap,
        fallback_to_anchor,
        ..ShrinkConfig::default()
    }
}

/// Round-trips a Python value through JSON into a serde type.
fn from_py_json<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_py_json<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// `(θ − α) mod 2π`.
#[pyfunction]
fn reflect(theta: f64, alpha: f64) -> f64 {
    ::ellipslice::reflect(Angle::new(theta), Angle::new(alpha)).radians()
}

/// Counter-based random stream.
#[pyclass(name = "Rng", module = "ellipslice", skip_from_py_object)]
#[derive(Clone)]
struct PyRng {
    inner: RngStream,
}

#[pymethods]
impl PyRng {
    #[new]
    fn new(seed: u64) -> Self {
        Self {
            inner: RngStream::new(seed),
        }
    }

    fn substream(&self, id: u64) -> Self {
        Self {
            inner: self.inner.substream(id),
        }
    }

    fn at_step(&self, step: u64) -> Self {
        Self {
            inner: self.inner.at_step(step),
        }
    }

    fn uniform(&mut self) -> f64 {
        self.inner.uniform()
    }

    fn normal(&mut self) -> f64 {
        self.inner.standard_normal()
    }
}

/// Generalized interval `I`, `J` or open on `[0, 2π)`.
#[pyclass(name = "Interval", module = "ellipslice", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyInterval {
    inner: GeneralizedInterval,
}

#[pymethods]
impl PyInterval {
    #[new]
    fn new(kind: &str, lo: f64, hi: f64) -> PyResult<Self> {
        let (lo, hi) = (Angle::new(lo), Angle::new(hi));
        let inner = match parse_kind(kind)? {
            IntervalKind::I => GeneralizedInterval::i(lo, hi),
            IntervalKind::J => GeneralizedInterval::j(lo, hi),
            IntervalKind::Open => GeneralizedInterval::open(lo, hi),
        };
        Ok(Self { inner })
    }

    fn contains(&self, gamma: f64) -> bool {
        self.inner.contains(Angle::new(gamma))
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.length()
    }

    fn is_full(&self) -> bool {
        self.inner.is_full()
    }

    fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    /// Image under `g_θ`; open intervals only.
    fn reflect(&self, theta: f64) -> PyResult<Self> {
        Ok(Self {
            inner: reflect_interval(Angle::new(theta), self.inner).map_err(err)?,
        })
    }

    fn sample(&self, rng: &mut PyRng) -> PyResult<f64> {
        Ok(self.inner.sample_uniform(&mut rng.inner).map_err(err)?.radians())
    }

    fn __repr__(&self) -> String {
        format!("Interval({})", self.inner)
    }
}

/// Finite union of open arcs.
#[pyclass(name = "ArcSet", module = "ellipslice", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyArcSet {
    inner: ArcSet,
}

#[pymethods]
impl PyArcSet {
    #[new]
    fn new(arcs: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Self {
            inner: ArcSet::from_radians(&arcs).map_err(err)?,
        })
    }

    #[staticmethod]
    fn full() -> Self {
        Self { inner: ArcSet::full() }
    }

    fn contains(&self, gamma: f64) -> bool {
        self.inner.contains(Angle::new(gamma))
    }

    #[getter]
    fn measure(&self) -> f64 {
        self.inner.measure()
    }

    fn arcs(&self) -> Vec<(f64, f64)> {
        self.inner.arcs().iter().map(|a| (a.lo.radians(), a.hi.radians())).collect()
    }

    fn reflect(&self, theta: f64) -> Self {
        Self {
            inner: self.inner.reflect(Angle::new(theta)),
        }
    }

    fn sample(&self, rng: &mut PyRng) -> PyResult<f64> {
        Ok(self.inner.sample_uniform(&mut rng.inner).map_err(err)?.radians())
    }

    fn __repr__(&self) -> String {
        format!("ArcSet({})", self.inner)
    }
}

/// Runs the shrinkage procedure with anchor `theta_in`, which must lie in
/// `set`. Returns a dict with `accepted`, `angle`, `iterations`, `evals`
/// and `collapsed`.
#[pyfunction]
#[pyo3(signature = (theta_in, set, rng, cap = 1000, fallback_to_anchor = false))]
fn shrink<'py>(
    py: Python<'py>,
    theta_in: f64,
    set: &PyArcSet,
    rng: &mut PyRng,
    cap: usize,
    fallback_to_anchor: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let out = ::ellipslice::shrink(
        Angle::new(theta_in),
        &set.inner,
        &mut rng.inner,
        &shrink_config(cap, fallback_to_anchor),
    )
    .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("accepted", out.is_accepted())?;
    d.set_item("angle", out.angle().map(Angle::radians))?;
    d.set_item("iterations", out.iterations())?;
    d.set_item("evals", out.evals())?;
    d.set_item("collapsed", matches!(out, ShrinkOutcome::CapExceeded { collapsed: true, .. }))?;
    Ok(d)
}

/// Monte Carlo estimate of `Q_S(θ, F)`: `(estimate, std_error, cap_hits)`.
#[pyfunction]
#[pyo3(signature = (set, theta, target, n, seed, cap = 1000))]
fn estimate_q(set: &PyArcSet, theta: f64, target: &PyArcSet, n: usize, seed: u64, cap: usize) -> PyResult<(f64, f64, usize)> {
    let q = ::ellipslice::estimate_q(
        &set.inner,
        Angle::new(theta),
        &target.inner,
        n,
        &RngStream::new(seed),
        &ShrinkConfig::with_cap(cap),
    )
    .map_err(err)?;
    Ok((q.estimate, q.std_error, q.cap_hits))
}

/// Gaussian prior covariance.
#[pyclass(name = "Covariance", module = "ellipslice", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCovariance {
    inner: CovarianceSpec,
}

#[pymethods]
impl PyCovariance {
    #[staticmethod]
    fn identity(dim: usize) -> PyResult<Self> {
        Ok(Self {
            inner: CovarianceSpec::identity(dim).map_err(err)?,
        })
    }

    #[staticmethod]
    fn spectral(eigenvalues: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: CovarianceSpec::spectral(eigenvalues).map_err(err)?,
        })
    }

    /// Eigenvalues `i^-exponent` for `i = 1..=dim`.
    #[staticmethod]
    fn power_law(dim: usize, exponent: f64) -> PyResult<Self> {
        Ok(Self {
            inner: CovarianceSpec::power_law(dim, exponent).map_err(err)?,
        })
    }

    #[staticmethod]
    fn dense(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(PyValueError::new_err("covariance must be square"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(Self {
            inner: CovarianceSpec::dense(dim, &flat).map_err(err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn trace(&self) -> f64 {
        self.inner.trace()
    }

    fn sample(&self, rng: &mut PyRng) -> Vec<f64> {
        self.inner.sample_prior(&mut rng.inner).into_inner()
    }
}

/// Posterior with Gaussian prior and a catalog likelihood given as a dict,
/// e.g. `{"kind": "gaussian", "mean": [1.0], "sigma": [1.0]}`.
#[pyclass(name = "Model", module = "ellipslice", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: TargetModel,
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(prior: &PyCovariance, likelihood: &Bound<'_, PyAny>) -> PyResult<Self> {
        let lik: Likelihood = from_py_json(likelihood)?;
        Ok(Self {
            inner: TargetModel::from_catalog(lik, prior.inner.clone()).map_err(err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn log_likelihood(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!(
                "expected {} coordinates, got {}",
                self.inner.dim(),
                x.len()
            )));
        }
        Ok(self.inner.log_likelihood(&x))
    }
}

/// One transition. Returns a dict with `x_out`, `angle`, `log_threshold`,
/// `shrink_iterations`, `likelihood_evals` and `cap_hit`.
#[pyfunction]
#[pyo3(signature = (model, x, rng, cap = 1000, variant = "reformulated"))]
fn ess_step<'py>(
    py: Python<'py>,
    model: &PyModel,
    x: Vec<f64>,
    rng: &mut PyRng,
    cap: usize,
    variant: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ShrinkConfig::with_cap(cap);
    let rec = match parse_variant(variant)? {
        Variant::Reformulated => ::ellipslice::ess_step(&model.inner, &x, &mut rng.inner, &cfg),
        Variant::Murray => ::ellipslice::ess_step_murray(&model.inner, &x, &mut rng.inner, &cfg),
    }
    .map_err(err)?;
    to_py_json(py, &rec)
}

/// `n_steps` transitions from `x0`. Returns a dict with `states` (one list
/// per step), `diagnostics` and `summary`.
#[pyfunction]
#[pyo3(signature = (model, x0, n_steps, seed, cap = 1000, variant = "reformulated"))]
fn run_chain<'py>(
    py: Python<'py>,
    model: &PyModel,
    x0: Vec<f64>,
    n_steps: usize,
    seed: u64,
    cap: usize,
    variant: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let variant = parse_variant(variant)?;
    let model = model.inner.clone();
    let chain = py
        .detach(|| {
            ::ellipslice::run_chain(&model, &x0, n_steps, &RngStream::new(seed), &ShrinkConfig::with_cap(cap), variant)
        })
        .map_err(err)?;
    to_py_json(py, &chain)
}

/// Runs one named verification check; returns its report as a dict.
#[pyfunction]
#[pyo3(signature = (name, seed = 20_240_601, n = None))]
fn verify<'py>(py: Python<'py>, name: &str, seed: u64, n: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    let opts = SuiteOptions {
        seed,
        n,
        ..SuiteOptions::default()
    };
    let name = name.to_string();
    let report = py.detach(|| run_named(&name, &opts)).map_err(err)?;
    to_py_json(py, &report)
}

#[pyfunction]
fn list_tests() -> Vec<&'static str> {
    known_tests().collect()
}

#[pymodule]
#[pyo3(name = "ellipslice")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRng>()?;
    m.add_class::<PyInterval>()?;
    m.add_class::<PyArcSet>()?;
    m.add_class::<PyCovariance>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(reflect, m)?)?;
    m.add_function(wrap_pyfunction!(shrink, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_q, m)?)?;
    m.add_function(wrap_pyfunction!(ess_step, m)?)?;
    m.add_function(wrap_pyfunction!(run_chain, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(list_tests, m)?)?;
    Ok(())
}
