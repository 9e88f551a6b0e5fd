//! Python bindings. `x` is given as a string: `"p/q"` selects exact
//! rational arithmetic, a decimal (or a Python float) selects the float
//! backend with certified error bounds. Structured results come back as
//! plain dicts and lists.

use std::sync::Arc;

use countdown_core::countdown::{self as process, Cutoff, DelaySequence, Trajectory};
use countdown_core::distributions::{self, Pmf};
use countdown_core::fieldmat::{self, FqField, FqMatrix};
use countdown_core::harness::{self, ExperimentSpec};
use countdown_core::qseries::{self, DEFAULT_TOL};
use countdown_core::tvmetrics;
use countdown_core::{Approx, Backend, Error, Rational, Scalar};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Resource { .. } | Error::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// `x` as accepted from Python: a string literal or a float.
#[derive(FromPyObject)]
enum XArg {
    Text(String),
    Float(f64),
}

impl XArg {
    fn text(&self) -> String {
        match self {
            XArg::Text(s) => s.clone(),
            XArg::Float(f) => f.to_string(),
        }
    }
}

/// Runs `$body` with `$x` parsed on the backend its literal selects.
macro_rules! with_x {
    ($arg:expr, |$x:ident| $body:expr) => {{
        let text = $arg.text();
        if text.contains('/') {
            let $x = Rational::parse(&text).map_err(py_err)?;
            $body
        } else {
            let $x = Approx::parse(&text).map_err(py_err)?;
            $body
        }
    }};
}

fn cutoff(n: Option<u64>) -> Cutoff {
    n.map_or(Cutoff::Infinite, Cutoff::Finite)
}

/// Serializes through JSON into native Python objects.
fn to_py<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn big_int(py: Python<'_>, v: impl std::fmt::Display) -> PyResult<Py<PyAny>> {
    Ok(py.import("builtins")?.getattr("int")?.call1((v.to_string(),))?.unbind())
}

/// A probability mass function on `0, 1, 2, ...`.
#[pyclass(name = "Pmf", frozen, module = "countdown")]
struct PyPmf {
    /// `"exact"` or `"float"`.
    #[pyo3(get)]
    backend: String,
    /// Entries as strings: `"p/q"` on the exact backend, decimals otherwise.
    #[pyo3(get)]
    probs: Vec<String>,
    /// Bound on mass missing from the stored entries.
    #[pyo3(get)]
    tail_bound: f64,
    /// Bound on overestimates from truncated infinite products.
    #[pyo3(get)]
    excess: f64,
    /// Per-entry error bounds (zero on the exact backend).
    #[pyo3(get)]
    err_bounds: Vec<f64>,
    values: Vec<f64>,
    json: String,
}

impl PyPmf {
    fn new<S: Scalar>(p: &Pmf<S>) -> Self {
        PyPmf {
            backend: S::BACKEND.to_string(),
            probs: p.probs.iter().map(|v| v.to_string()).collect(),
            tail_bound: p.tail_mass_hi.upper_f64(),
            excess: p.excess_hi.upper_f64(),
            err_bounds: p.probs.iter().map(Scalar::err_bound).collect(),
            values: p.probs.iter().map(Scalar::to_f64).collect(),
            json: serde_json::to_string(p).expect("serializable"),
        }
    }
}

#[pymethods]
impl PyPmf {
    fn __len__(&self) -> usize {
        self.values.len()
    }

    /// Probability of `k` as a float; 0 past the stored support.
    fn __getitem__(&self, k: usize) -> f64 {
        self.values.get(k).copied().unwrap_or(0.0)
    }

    fn floats(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Entries as `fractions.Fraction` (exact backend only).
    fn fractions(&self, py: Python<'_>) -> PyResult<Vec<Py<PyAny>>> {
        if self.backend != Backend::Exact.to_string() {
            return Err(PyValueError::new_err("fractions() needs the exact backend; pass x as \"p/q\""));
        }
        let fraction = py.import("fractions")?.getattr("Fraction")?;
        self.probs
            .iter()
            .map(|p| Ok(fraction.call1((p.as_str(),))?.unbind()))
            .collect()
    }

    fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    fn to_json(&self) -> String {
        self.json.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Pmf(backend={}, len={}, tail_bound={:e})",
            self.backend,
            self.values.len(),
            self.tail_bound
        )
    }
}

/// Law of the height at time `t`; `n=None` is the untruncated process.
#[pyfunction]
#[pyo3(signature = (x, n=None, t=0, k_max=None, tol=DEFAULT_TOL))]
fn corank_pmf(x: XArg, n: Option<u64>, t: i64, k_max: Option<u64>, tol: f64) -> PyResult<PyPmf> {
    with_x!(x, |xv| Ok(PyPmf::new(
        &distributions::corank_pmf(&xv, cutoff(n), t, k_max, tol).map_err(py_err)?
    )))
}

/// Law of the hitting time `S_n` (`S` for `n=None`).
#[pyfunction]
#[pyo3(signature = (x, n=None, k_max=None, tol=DEFAULT_TOL))]
fn hitting_pmf(x: XArg, n: Option<u64>, k_max: Option<u64>, tol: f64) -> PyResult<PyPmf> {
    with_x!(x, |xv| Ok(PyPmf::new(
        &distributions::hitting_time_pmf(&xv, cutoff(n), k_max, tol).map_err(py_err)?
    )))
}

/// Law of `R_n = Z_{n+1} + Z_{n+2} + ...`.
#[pyfunction]
#[pyo3(signature = (x, n, k_max=None, tol=DEFAULT_TOL))]
fn rn_pmf(x: XArg, n: u64, k_max: Option<u64>, tol: f64) -> PyResult<PyPmf> {
    with_x!(x, |xv| Ok(PyPmf::new(
        &distributions::rn_pmf(&xv, n, k_max, tol).map_err(py_err)?
    )))
}

#[pyfunction]
fn rn_tail_check(py: Python<'_>, x: XArg, n: u64) -> PyResult<Py<PyAny>> {
    with_x!(x, |xv| to_py(py, &distributions::rn_tail_bound_check(&xv, n).map_err(py_err)?))
}

#[pyfunction]
#[pyo3(signature = (x, n, t=0, tol=DEFAULT_TOL))]
fn tv_corank(py: Python<'_>, x: XArg, n: u64, t: i64, tol: f64) -> PyResult<Py<PyAny>> {
    with_x!(x, |xv| to_py(py, &tvmetrics::tv_corank(&xv, n, t, tol).map_err(py_err)?))
}

#[pyfunction]
#[pyo3(signature = (x, n, tol=DEFAULT_TOL))]
fn tv_hitting(py: Python<'_>, x: XArg, n: u64, tol: f64) -> PyResult<Py<PyAny>> {
    with_x!(x, |xv| to_py(py, &tvmetrics::tv_hitting(&xv, n, tol).map_err(py_err)?))
}

#[pyfunction]
#[pyo3(signature = (x, n, tol=DEFAULT_TOL))]
fn tv_process(py: Python<'_>, x: XArg, n: u64, tol: f64) -> PyResult<Py<PyAny>> {
    with_x!(x, |xv| to_py(py, &tvmetrics::tv_process(&xv, n, tol).map_err(py_err)?))
}

/// Exact corank distance for `F_q` matrices against the classical bounds.
#[pyfunction]
#[pyo3(signature = (q, n, m, tol=1e-20))]
fn fg_compare(py: Python<'_>, q: u64, n: u64, m: i64, tol: f64) -> PyResult<Py<PyAny>> {
    to_py(py, &tvmetrics::fg_comparison(q, n, m, tol).map_err(py_err)?)
}

#[pyfunction]
#[pyo3(signature = (k, tol=1e-15))]
fn critical_x(py: Python<'_>, k: u64, tol: f64) -> PyResult<Py<PyAny>> {
    to_py(py, &distributions::critical_x(k, tol).map_err(py_err)?)
}

#[pyfunction]
#[pyo3(signature = (x, tol=DEFAULT_TOL))]
fn mode_of_s(py: Python<'_>, x: XArg, tol: f64) -> PyResult<Py<PyAny>> {
    with_x!(x, |xv| to_py(py, &distributions::mode_of_s(&xv, tol).map_err(py_err)?))
}

#[pyfunction]
fn q_binomial(py: Python<'_>, n: u64, k: i64, q: u64) -> PyResult<Py<PyAny>> {
    big_int(py, qseries::q_binomial(n, k, q).map_err(py_err)?)
}

/// Number of `n x c` matrices over `F_q` of rank `r`.
#[pyfunction]
fn rank_count(py: Python<'_>, q: u64, n: u64, c: u64, r: u64) -> PyResult<Py<PyAny>> {
    big_int(py, fieldmat::rank_count_exact(q, n, c, r).map_err(py_err)?)
}

/// Rank counts by exhaustive enumeration, indexed by rank.
#[pyfunction]
#[pyo3(signature = (q, rows, cols, cap=fieldmat::DEFAULT_ENUMERATION_CAP))]
fn enumerate_rank_counts(py: Python<'_>, q: u32, rows: usize, cols: usize, cap: u64) -> PyResult<Vec<u64>> {
    let field = Arc::new(FqField::new(q).map_err(py_err)?);
    py.detach(|| fieldmat::enumerate_rank_counts(&field, rows, cols, cap))
        .map_err(py_err)
}

/// Rank of a matrix over `F_q`, entries in `0..q` (extension-field elements
/// as their table indices).
#[pyfunction]
fn matrix_rank(q: u32, rows: Vec<Vec<u8>>) -> PyResult<usize> {
    let field = Arc::new(FqField::new(q).map_err(py_err)?);
    Ok(FqMatrix::from_rows(&field, &rows).map_err(py_err)?.rank())
}

/// `(t, height)` points of the path driven by delays `z = [z_1, z_2, ...]`
/// on the inclusive window.
#[pyfunction]
fn trajectory(z: Vec<u64>, window: (i64, i64)) -> Vec<(i64, u64)> {
    process::phi(&DelaySequence::from_dense(&z), window).points().collect()
}

#[pyfunction]
fn height_at(z: Vec<u64>, t: i64) -> u64 {
    process::height_at(&DelaySequence::from_dense(&z), t)
}

/// Delays recovered from heights observed on `t_min, t_min + 1, ...`.
#[pyfunction]
fn delays_from_path(t_min: i64, heights: Vec<u64>) -> PyResult<Vec<u64>> {
    let z = process::phi_inverse(&Trajectory { t_min, heights }).map_err(py_err)?;
    Ok(z.to_dense(z.max_support()))
}

/// One draw of `(Z_1, ..., Z_n)` from a seeded stream.
#[pyfunction]
#[pyo3(signature = (x, n, seed=0))]
fn sample_delays(x: XArg, n: u64, seed: u64) -> PyResult<Vec<u64>> {
    let xv = Approx::parse(&x.text()).map_err(py_err)?;
    let z = process::sample_delays(&xv, Cutoff::Finite(n), &mut process::seeded_rng(seed, 0))
        .map_err(py_err)?;
    Ok(z.to_dense(n))
}

/// Runs one experiment given as a dict or JSON string.
#[pyfunction]
fn run_experiment(py: Python<'_>, spec: Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    let text: String = match spec.extract::<String>() {
        Ok(s) => s,
        Err(_) => py.import("json")?.call_method1("dumps", (spec,))?.extract()?,
    };
    let spec: ExperimentSpec =
        serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = py.detach(|| harness::run_experiment(&spec)).map_err(py_err)?;
    to_py(py, &report)
}

/// Runs an acceptance suite by name (`"all"` for every criterion).
#[pyfunction]
#[pyo3(signature = (name="all", seed=harness::DEFAULT_SEED))]
fn run_suite(py: Python<'_>, name: &str, seed: u64) -> PyResult<Py<PyAny>> {
    let results = py.detach(|| harness::run_suite(name, seed)).map_err(py_err)?;
    to_py(py, &results)
}

#[pymodule]
fn countdown(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPmf>()?;
    m.add_function(wrap_pyfunction!(corank_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(hitting_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(rn_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(rn_tail_check, m)?)?;
    m.add_function(wrap_pyfunction!(tv_corank, m)?)?;
    m.add_function(wrap_pyfunction!(tv_hitting, m)?)?;
    m.add_function(wrap_pyfunction!(tv_process, m)?)?;
    m.add_function(wrap_pyfunction!(fg_compare, m)?)?;
    m.add_function(wrap_pyfunction!(critical_x, m)?)?;
    m.add_function(wrap_pyfunction!(mode_of_s, m)?)?;
    m.add_function(wrap_pyfunction!(q_binomial, m)?)?;
    m.add_function(wrap_pyfunction!(rank_count, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_rank_counts, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_rank, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(height_at, m)?)?;
    m.add_function(wrap_pyfunction!(delays_from_path, m)?)?;
    m.add_function(wrap_pyfunction!(sample_delays, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
