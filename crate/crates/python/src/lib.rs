//! Python bindings for the `wsr` crate.

use std::path::PathBuf;

use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use wsr::certificates;
use wsr::error::Error;
use wsr::experiments::verify::{run_suite, Suite};
use wsr::experiments::{load_scenario, parse_scenario, run_scenario as run_core, sweep_overlap as sweep_core};
use wsr::fem::{self, SourceConfiguration};
use wsr::solver::{self, SolverConfig};
use wsr::weighting::{self, WeightingScheme};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::Parse(_) | Error::Validation(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

// hands structured results to Python as plain dicts and lists
fn to_object<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

// nalgebra serializes vectors with their shape, so x goes out as a flat list
fn solve_object(py: Python<'_>, r: &solver::SolveResult) -> PyResult<Py<PyAny>> {
    let obj = to_object(py, r)?;
    obj.bind(py).set_item("x", r.x.as_slice().to_vec())?;
    Ok(obj)
}

fn vector(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

/// P1 finite-element Neumann-to-boundary map on the unit square.
#[pyclass(frozen)]
struct ForwardModel {
    inner: fem::ForwardModel,
}

#[pymethods]
impl ForwardModel {
    #[new]
    fn new(cells_per_side: usize, epsilon: f64) -> PyResult<Self> {
        Ok(Self { inner: fem::ForwardModel::assemble(cells_per_side, epsilon).map_err(to_py)? })
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.apply(&vector(x)).map_err(to_py)?.as_slice().to_vec())
    }

    /// Dense matrix as a list of rows.
    fn matrix(&self) -> Vec<Vec<f64>> {
        self.inner.matrix().row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn locate_node(&self, x: f64, y: f64) -> usize {
        self.inner.grid().locate_node((x, y))
    }

    fn node_coordinates(&self, node: usize) -> PyResult<(f64, f64)> {
        if node >= self.inner.cols() {
            return Err(PyValueError::new_err(format!("node {node} out of range")));
        }
        Ok(self.inner.grid().node_coordinates(node))
    }

    fn boundary_index_map(&self) -> Vec<usize> {
        self.inner.grid().boundary_index_map().to_vec()
    }
}

/// Weighted operator `C = BA` with its column weights.
#[pyclass(frozen)]
struct WeightedOperator {
    inner: weighting::WeightedOperator,
}

#[pymethods]
impl WeightedOperator {
    /// `scheme` is one of identity, trunc_pinv, random_sparse, pre_orth.
    #[new]
    #[pyo3(signature = (model, scheme="identity", k=None, p=None, density=0.1, seed=7, indices=None, unweighted=false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        model: &ForwardModel,
        scheme: &str,
        k: Option<usize>,
        p: Option<usize>,
        density: f64,
        seed: u64,
        indices: Option<Vec<usize>>,
        unweighted: bool,
    ) -> PyResult<Self> {
        let a = model.inner.matrix();
        let scheme = match scheme {
            "identity" => WeightingScheme::Identity,
            "trunc_pinv" => WeightingScheme::TruncatedPseudoInverse { k: k.unwrap_or(a.nrows().min(a.ncols())) },
            "random_sparse" => WeightingScheme::RandomSparse { p: p.unwrap_or(a.nrows()), density, seed },
            "pre_orth" => WeightingScheme::PreOrthogonalizer {
                indices: indices.ok_or_else(|| PyValueError::new_err("pre_orth needs indices"))?,
            },
            other => return Err(PyValueError::new_err(format!("unknown scheme `{other}`"))),
        };
        let op = weighting::build_weighted_operator(a, &scheme).map_err(to_py)?;
        Ok(Self { inner: if unweighted { op.with_unit_weights() } else { op } })
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    fn weights(&self) -> Vec<f64> {
        self.inner.weights().as_slice().to_vec()
    }

    /// Maps a boundary observation to the solver's data vector.
    fn transform_data(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.transform_data(&vector(y)).map_err(to_py)?.as_slice().to_vec())
    }

    fn image(&self, j: usize) -> PyResult<Vec<f64>> {
        if j >= self.inner.cols() {
            return Err(PyValueError::new_err(format!("index {j} out of range")));
        }
        Ok(self.inner.image(j).as_slice().to_vec())
    }

    fn mutual_coherence(&self) -> f64 {
        certificates::mutual_coherence(&self.inner)
    }

    fn argmax_source(&self, j: usize) -> PyResult<usize> {
        certificates::argmax_source(&self.inner, j).map_err(to_py)
    }

    fn objective(&self, b: Vec<f64>, alpha: f64, x: Vec<f64>) -> PyResult<f64> {
        solver::objective(&self.inner, &vector(b), alpha, &vector(x)).map_err(to_py)
    }

    fn kkt_residual(&self, b: Vec<f64>, alpha: f64, x: Vec<f64>) -> PyResult<f64> {
        solver::kkt_residual(&self.inner, &vector(b), alpha, &vector(x)).map_err(to_py)
    }
}

fn solver_config(alpha: f64, max_iterations: Option<usize>, kkt_tolerance: Option<f64>) -> SolverConfig {
    let mut cfg = SolverConfig::with_alpha(alpha);
    if let Some(n) = max_iterations {
        cfg.max_iterations = n;
    }
    if let Some(t) = kkt_tolerance {
        cfg.kkt_tolerance = t;
    }
    cfg
}

/// Weighted l1 regularized least squares; returns a dict.
#[pyfunction]
#[pyo3(signature = (op, b, alpha, max_iterations=None, kkt_tolerance=None))]
fn solve_weighted_lasso(
    py: Python<'_>,
    op: &WeightedOperator,
    b: Vec<f64>,
    alpha: f64,
    max_iterations: Option<usize>,
    kkt_tolerance: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let cfg = solver_config(alpha, max_iterations, kkt_tolerance);
    let b = vector(b);
    let r = py.detach(|| match solver::solve_weighted_lasso(&op.inner, &b, &cfg) {
        Err(Error::NotConverged(r)) => Ok(*r),
        other => other,
    });
    solve_object(py, &r.map_err(to_py)?)
}

#[pyfunction]
fn solve_basis_pursuit(py: Python<'_>, op: &WeightedOperator, b: Vec<f64>) -> PyResult<Py<PyAny>> {
    let b = vector(b);
    let r = py.detach(|| solver::solve_basis_pursuit(&op.inner, &b, &SolverConfig::default())).map_err(to_py)?;
    solve_object(py, &r)
}

#[pyfunction]
fn closed_form_single_source(op: &WeightedOperator, j: usize, alpha: f64) -> PyResult<Vec<f64>> {
    Ok(solver::closed_form_single_source(&op.inner, j, alpha).map_err(to_py)?.as_slice().to_vec())
}

/// Dual certificate for sources given as `[(index, amplitude), ...]`.
#[pyfunction]
fn dual_certificate(py: Python<'_>, op: &WeightedOperator, sources: Vec<(usize, f64)>) -> PyResult<Py<PyAny>> {
    let x = SourceConfiguration::new(sources, op.inner.cols()).map_err(to_py)?;
    to_object(py, &certificates::dual_certificate(&op.inner, &x).map_err(to_py)?)
}

#[pyfunction]
#[pyo3(signature = (op, support, rho_bar=None))]
fn analyze_parallel_recovery(py: Python<'_>, op: &WeightedOperator, support: Vec<usize>, rho_bar: Option<f64>) -> PyResult<Py<PyAny>> {
    to_object(py, &certificates::analyze_parallel_recovery(&op.inner, &support, rho_bar).map_err(to_py)?)
}

#[pyfunction]
#[pyo3(signature = (op, j, k, taus=None))]
fn disjointness_overlap(py: Python<'_>, op: &WeightedOperator, j: usize, k: usize, taus: Option<Vec<f64>>) -> PyResult<Py<PyAny>> {
    let taus = taus.unwrap_or_else(certificates::default_tau_grid);
    to_object(py, &certificates::disjointness_overlap(&op.inner, j, k, &taus).map_err(to_py)?)
}

#[pyfunction]
fn q_closed_form_solution(rho: f64, s: usize) -> PyResult<Vec<f64>> {
    Ok(certificates::q_closed_form_solution(rho, s).map_err(to_py)?.as_slice().to_vec())
}

#[pyfunction]
fn r_perturbation_bound(rho: f64, s: usize) -> PyResult<f64> {
    certificates::r_perturbation_bound(rho, s).map_err(to_py)
}

/// Checks a scenario config (JSON text) and returns it normalized.
#[pyfunction]
fn parse_config(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    to_object(py, &parse_scenario(text).map_err(to_py)?)
}

/// Runs a scenario file and writes its artifacts; returns the run summary.
#[pyfunction]
fn run_scenario(py: Python<'_>, config: PathBuf, out: PathBuf) -> PyResult<Py<PyAny>> {
    let art = py.detach(|| load_scenario(&config).and_then(|cfg| run_core(&cfg, &out))).map_err(to_py)?;
    to_object(py, &art.summary)
}

#[pyfunction]
fn sweep_overlap(py: Python<'_>, config: PathBuf) -> PyResult<Py<PyAny>> {
    let reports = py.detach(|| load_scenario(&config).and_then(|cfg| sweep_core(&cfg))).map_err(to_py)?;
    to_object(py, &reports)
}

/// Runs a self-check suite; returns `(passed, line)` pairs.
#[pyfunction]
#[pyo3(signature = (suite="all"))]
fn verify(py: Python<'_>, suite: &str) -> PyResult<Vec<(bool, String)>> {
    let suite: Suite = suite.parse().map_err(to_py)?;
    Ok(py.detach(|| run_suite(suite)).into_iter().map(|o| (o.passed, o.to_string())).collect())
}

#[pymodule]
fn pywsr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ForwardModel>()?;
    m.add_class::<WeightedOperator>()?;
    m.add_function(wrap_pyfunction!(solve_weighted_lasso, m)?)?;
    m.add_function(wrap_pyfunction!(solve_basis_pursuit, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_single_source, m)?)?;
    m.add_function(wrap_pyfunction!(dual_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_parallel_recovery, m)?)?;
    m.add_function(wrap_pyfunction!(disjointness_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(q_closed_form_solution, m)?)?;
    m.add_function(wrap_pyfunction!(r_perturbation_bound, m)?)?;
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
