//! Python bindings. Matrices cross the boundary as nested row lists (any
//! sequence of sequences of floats, numpy arrays included) and come back as
//! lists of rows.

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use stls_core::hetero;
use stls_core::{ErrorStructure, FixedEntry};

create_exception!(
    stls,
    StlsError,
    PyException,
    "Solver failure; args are (category, message)."
);

fn solver_err(e: stls_core::StlsError) -> PyErr {
    StlsError::new_err((e.category(), e.to_string()))
}

/// Row lists to a matrix; rejects ragged input.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(format!("row {i} has {} entries, expected {cols}", r.len()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    matrix_from_rows(&rows).map_err(PyValueError::new_err)
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Parses `"none"`, `"toeplitz"` or `"mask"` (with a 0/1 matrix; nonzero pins the error to zero).
fn structure(kind: &str, mask: Option<Vec<Vec<f64>>>, shape: (usize, usize)) -> PyResult<ErrorStructure> {
    match (kind, mask) {
        ("none", None) => Ok(ErrorStructure::Unconstrained),
        ("toeplitz", None) => Ok(ErrorStructure::Toeplitz),
        ("mask", Some(m)) => {
            let m = to_matrix(m)?;
            if m.shape() != shape {
                return Err(PyValueError::new_err(format!(
                    "mask is {}×{}, matrix is {}×{}",
                    m.nrows(),
                    m.ncols(),
                    shape.0,
                    shape.1
                )));
            }
            Ok(ErrorStructure::mask_from_fn(shape.0, shape.1, |i, j| m[(i, j)] != 0.0))
        }
        ("mask", None) => Err(PyValueError::new_err("structure 'mask' needs a mask matrix")),
        (k, _) => Err(PyValueError::new_err(format!(
            "unknown structure {k:?} (expected 'none', 'toeplitz' or 'mask'; mask only with 'mask')"
        ))),
    }
}

#[pyclass(name = "SolverConfig", from_py_object)]
#[derive(Clone)]
pub struct PySolverConfig {
    #[pyo3(get, set)]
    mu_growth: f64,
    #[pyo3(get, set)]
    mu_init: f64,
    #[pyo3(get, set)]
    delta: f64,
    #[pyo3(get, set)]
    max_reweights: usize,
    #[pyo3(get, set)]
    alm_max_iters: usize,
    #[pyo3(get, set)]
    feas_tol: f64,
    #[pyo3(get, set)]
    rank_tol: f64,
}

#[pymethods]
impl PySolverConfig {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let d = stls_core::SolverConfig::default();
        let mut c = Self {
            mu_growth: d.mu_growth,
            mu_init: d.mu_init,
            delta: d.delta,
            max_reweights: d.max_reweights,
            alm_max_iters: d.alm_max_iters,
            feas_tol: d.feas_tol,
            rank_tol: d.rank_tol,
        };
        if let Some(o) = overrides {
            for (k, v) in o.iter() {
                let key: String = k.extract()?;
                match key.as_str() {
                    "mu_growth" => c.mu_growth = v.extract()?,
                    "mu_init" => c.mu_init = v.extract()?,
                    "delta" => c.delta = v.extract()?,
                    "max_reweights" => c.max_reweights = v.extract()?,
                    "alm_max_iters" => c.alm_max_iters = v.extract()?,
                    "feas_tol" => c.feas_tol = v.extract()?,
                    "rank_tol" => c.rank_tol = v.extract()?,
                    _ => return Err(PyValueError::new_err(format!("unknown solver option {key:?}"))),
                }
            }
        }
        c.core().check().map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(c)
    }

    fn __repr__(&self) -> String {
        format!(
            "SolverConfig(mu_growth={}, mu_init={}, delta={}, max_reweights={}, alm_max_iters={}, feas_tol={}, rank_tol={})",
            self.mu_growth, self.mu_init, self.delta, self.max_reweights, self.alm_max_iters, self.feas_tol, self.rank_tol
        )
    }
}

impl PySolverConfig {
    fn core(&self) -> stls_core::SolverConfig {
        stls_core::SolverConfig {
            mu_growth: self.mu_growth,
            mu_init: self.mu_init,
            delta: self.delta,
            max_reweights: self.max_reweights,
            alm_max_iters: self.alm_max_iters,
            feas_tol: self.feas_tol,
            rank_tol: self.rank_tol,
            ..Default::default()
        }
    }
}

fn config(c: Option<PySolverConfig>) -> PyResult<stls_core::SolverConfig> {
    let cfg = c.map(|c| c.core()).unwrap_or_default();
    cfg.check().map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(cfg)
}

#[pyclass(name = "Problem", from_py_object)]
#[derive(Clone)]
pub struct PyProblem {
    inner: stls_core::StlsProblem,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (a_bar, structure="none", mask=None, weights=None, target_rank=None))]
    fn new(
        a_bar: Vec<Vec<f64>>,
        structure: &str,
        mask: Option<Vec<Vec<f64>>>,
        weights: Option<Vec<Vec<f64>>>,
        target_rank: Option<usize>,
    ) -> PyResult<Self> {
        let a = to_matrix(a_bar)?;
        let s = self::structure(structure, mask, a.shape())?;
        let mut p = stls_core::StlsProblem::new(a, s);
        if let Some(w) = weights {
            p = p.with_weights(to_matrix(w)?);
        }
        if let Some(k) = target_rank {
            p = p.with_target_rank(k);
        }
        let inner = p.validate().map_err(|r| solver_err(stls_core::StlsError::Invalid(r)))?;
        Ok(Self { inner })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.a_bar.shape()
    }

    #[getter]
    fn target_rank(&self) -> usize {
        self.inner.target_rank
    }

    #[getter]
    fn a_bar(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.a_bar)
    }

    /// Fixed entries as `(row, col, value)`; empty unless the structure is a mask.
    #[getter]
    fn fixed_entries(&self) -> Vec<(usize, usize, f64)> {
        match &self.inner.structure {
            ErrorStructure::FixedMask(f) => f
                .iter()
                .map(|&FixedEntry { row, col, value }| (row, col, value))
                .collect(),
            _ => Vec::new(),
        }
    }

    fn __repr__(&self) -> String {
        let (m, n) = self.shape();
        let kind = match self.inner.structure {
            ErrorStructure::Unconstrained => "none",
            ErrorStructure::FixedMask(_) => "mask",
            ErrorStructure::Toeplitz => "toeplitz",
            ErrorStructure::GeneralLinear(_) => "general",
        };
        format!(
            "Problem({m}×{n}, structure={kind}, target_rank={})",
            self.inner.target_rank
        )
    }
}

#[pyclass(name = "Solution", skip_from_py_object)]
pub struct PySolution {
    inner: stls_core::StlsSolution,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn a_hat(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.a_hat)
    }

    #[getter]
    fn e_hat(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.e_hat)
    }

    #[getter]
    fn null_vec(&self) -> Vec<f64> {
        to_vec(&self.inner.null_vec)
    }

    #[getter]
    fn beta(&self) -> Option<Vec<f64>> {
        self.inner.beta.as_ref().map(to_vec)
    }

    /// `None` for the unregularized baselines.
    #[getter]
    fn alpha(&self) -> Option<f64> {
        self.inner.alpha.is_finite().then_some(self.inner.alpha)
    }

    #[getter]
    fn diagnostics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = &self.inner.diagnostics;
        let out = PyDict::new(py);
        out.set_item("alpha", self.alpha())?;
        out.set_item("iterations", d.total_iterations)?;
        out.set_item("feas_residual", d.feas_residual)?;
        out.set_item("rank", d.numerical_rank)?;
        out.set_item("converged", d.converged)?;
        out.set_item("round_errors", d.round_errors.clone())?;
        Ok(out)
    }

    /// `‖Ā − Â‖_F / σ_N(Ā)` for the problem this solves.
    fn relative_error(&self, problem: &PyProblem) -> PyResult<f64> {
        stls_core::relative_error(&problem.inner, &self.inner).map_err(solver_err)
    }
}

fn wrap(s: stls_core::StlsSolution) -> PySolution {
    PySolution { inner: s }
}

/// Truncated-SVD TLS; unstructured problems only.
#[pyfunction]
fn plain_tls(problem: &PyProblem) -> PyResult<PySolution> {
    stls_core::plain_tls(&problem.inner).map(wrap).map_err(solver_err)
}

/// Nuclear-norm STLS with the α search.
#[pyfunction]
#[pyo3(signature = (problem, config=None))]
fn nn_stls(py: Python<'_>, problem: &PyProblem, config: Option<PySolverConfig>) -> PyResult<PySolution> {
    let cfg = self::config(config)?;
    let p = &problem.inner;
    py.detach(|| stls_core::nn_stls(p, &cfg))
        .map(|(s, _)| wrap(s))
        .map_err(solver_err)
}

/// Reweighted nuclear-norm STLS.
#[pyfunction]
#[pyo3(signature = (problem, config=None))]
fn reweighted_stls(py: Python<'_>, problem: &PyProblem, config: Option<PySolverConfig>) -> PyResult<PySolution> {
    let cfg = self::config(config)?;
    let p = &problem.inner;
    py.detach(|| stls_core::reweighted_stls(p, &cfg))
        .map(|(s, _)| wrap(s))
        .map_err(solver_err)
}

#[pyfunction]
fn logdet_tls(a_bar: Vec<Vec<f64>>) -> PyResult<PySolution> {
    stls_core::logdet_tls(&to_matrix(a_bar)?).map(wrap).map_err(solver_err)
}

#[pyfunction]
fn svt(z: Vec<Vec<f64>>, gamma: f64) -> PyResult<Vec<Vec<f64>>> {
    stls_core::svt(&to_matrix(z)?, gamma)
        .map(|m| matrix_to_rows(&m))
        .map_err(solver_err)
}

#[pyfunction]
#[pyo3(signature = (y, alpha, delta=0.0))]
fn log_threshold_scalar(y: f64, alpha: f64, delta: f64) -> f64 {
    stls_core::log_threshold_scalar(y, alpha, delta)
}

#[pyfunction]
#[pyo3(signature = (z, alpha, delta=0.0))]
fn log_threshold_spectral(z: Vec<Vec<f64>>, alpha: f64, delta: f64) -> PyResult<Vec<Vec<f64>>> {
    stls_core::log_threshold_spectral(&to_matrix(z)?, alpha, delta)
        .map(|m| matrix_to_rows(&m))
        .map_err(solver_err)
}

#[pyfunction]
fn err_bound_nn(sigmas: Vec<f64>) -> f64 {
    stls_core::err_bound_nn(&sigmas)
}

#[pyfunction]
fn err_bound_rwnn(sigmas: Vec<f64>) -> PyResult<f64> {
    stls_core::err_bound_rwnn(&sigmas).map_err(solver_err)
}

/// Solves `X + B₁ X B₂ = C`.
#[pyfunction]
fn solve_sylvester(b1: Vec<Vec<f64>>, b2: Vec<Vec<f64>>, c: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    stls_core::solve_sylvester(&to_matrix(b1)?, &to_matrix(b2)?, &to_matrix(c)?)
        .map(|m| matrix_to_rows(&m))
        .map_err(solver_err)
}

/// Nearest matrix to `e` obeying the structure.
#[pyfunction]
#[pyo3(signature = (e, structure="none", mask=None))]
fn project_structure(e: Vec<Vec<f64>>, structure: &str, mask: Option<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
    let e = to_matrix(e)?;
    let s = self::structure(structure, mask, e.shape())?;
    stls_core::project_structure(&e, &s)
        .map(|m| matrix_to_rows(&m))
        .map_err(solver_err)
}

/// State fractions from expression `x` (genes × conditions) and indicator `s`
/// (genes × states). Returns a dict with `u`, `lambda`, `gap`,
/// `non_identifiable`, and for `noisy=True` also `x_error` and `diagnostics`.
#[pyfunction]
#[pyo3(signature = (s, x, noisy=false, weights=None, config=None))]
fn heterogeneity<'py>(
    py: Python<'py>,
    s: Vec<Vec<f64>>,
    x: Vec<Vec<f64>>,
    noisy: bool,
    weights: Option<Vec<Vec<f64>>>,
    config: Option<PySolverConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let inst = hetero::HeterogeneityInstance::new(to_matrix(s)?, to_matrix(x)?).map_err(solver_err)?;
    let w = weights.map(to_matrix).transpose()?;
    let cfg = self::config(config)?;
    let sol = if noisy {
        py.detach(|| hetero::solve_noisy_weighted(&inst, w.as_ref(), &cfg))
    } else {
        hetero::solve_noiseless(&inst)
    }
    .map_err(solver_err)?;
    let out = PyDict::new(py);
    out.set_item("u", matrix_to_rows(&sol.u))?;
    out.set_item("lambda", to_vec(&sol.lambda_vec))?;
    out.set_item("gap", sol.gap)?;
    out.set_item("non_identifiable", sol.non_identifiable)?;
    if let Some(xe) = &sol.x_error {
        out.set_item("x_error", matrix_to_rows(xe))?;
    }
    if let Some(d) = &sol.diagnostics {
        let dd = PyDict::new(py);
        dd.set_item("iterations", d.total_iterations)?;
        dd.set_item("feas_residual", d.feas_residual)?;
        dd.set_item("rank", d.numerical_rank)?;
        dd.set_item("converged", d.converged)?;
        out.set_item("diagnostics", dd)?;
    }
    Ok(out)
}

/// Planted heterogeneity instance: returns `(s, x, z, u)`.
#[pyfunction]
#[pyo3(signature = (genes, states, conditions, noise_level=0.0, seed=0))]
#[allow(clippy::type_complexity)]
fn synthesize_heterogeneity(
    genes: usize,
    states: usize,
    conditions: usize,
    noise_level: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>)> {
    let inst = hetero::synthesize(genes, states, conditions, noise_level, seed).map_err(solver_err)?;
    let t = inst.truth.expect("synthetic instances carry their truth");
    Ok((
        matrix_to_rows(&inst.s),
        matrix_to_rows(&inst.x),
        to_vec(&t.z),
        matrix_to_rows(&t.u),
    ))
}

#[pymodule]
fn stls(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("StlsError", m.py().get_type::<StlsError>())?;
    m.add_class::<PySolverConfig>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(plain_tls, m)?)?;
    m.add_function(wrap_pyfunction!(nn_stls, m)?)?;
    m.add_function(wrap_pyfunction!(reweighted_stls, m)?)?;
    m.add_function(wrap_pyfunction!(logdet_tls, m)?)?;
    m.add_function(wrap_pyfunction!(svt, m)?)?;
    m.add_function(wrap_pyfunction!(log_threshold_scalar, m)?)?;
    m.add_function(wrap_pyfunction!(log_threshold_spectral, m)?)?;
    m.add_function(wrap_pyfunction!(err_bound_nn, m)?)?;
    m.add_function(wrap_pyfunction!(err_bound_rwnn, m)?)?;
    m.add_function(wrap_pyfunction!(solve_sylvester, m)?)?;
    m.add_function(wrap_pyfunction!(project_structure, m)?)?;
    m.add_function(wrap_pyfunction!(heterogeneity, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_heterogeneity, m)?)?;
    Ok(())
}
