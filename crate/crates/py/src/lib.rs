//! Python bindings for the perc-core library.

use pyo3::exceptions::{PyMemoryError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use perc_core::oracle;
use perc_core::spectral::{evaluate, is_subcritical as certify};
use perc_core::{Backend, BuildOptions, PowerOptions, SearchOptions};

fn to_py(e: perc_core::Error) -> PyErr {
    use perc_core::Error as E;
    match e {
        E::MemoryBudget { .. } => PyMemoryError::new_err(e.to_string()),
        E::NonConvergence { .. } | E::CertificationFailed { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Model", frozen)]
struct PyModel(perc_core::ModelSpec);

#[pymethods]
impl PyModel {
    #[new]
    fn new(id: &str) -> PyResult<Self> {
        Ok(PyModel(id.parse().map_err(to_py)?))
    }

    #[getter]
    fn id(&self) -> &'static str {
        self.0.id()
    }

    #[getter]
    fn arity(&self) -> usize {
        self.0.arity()
    }

    fn __repr__(&self) -> String {
        format!("Model('{}')", self.0.id())
    }
}

#[pyclass(name = "StateSpace", frozen)]
struct PyStateSpace(perc_core::StateSpace);

#[pymethods]
impl PyStateSpace {
    /// `space` uses the CLI syntax: `k`, `k,i,j` or `L,f` for the 3D lattice.
    #[new]
    fn new(model: &PyModel, space: &str) -> PyResult<Self> {
        let spec = perc_core::SpaceSpec::parse(space, model.0.lattice).map_err(to_py)?;
        Ok(PyStateSpace(perc_core::StateSpace::enumerate(&model.0, spec).map_err(to_py)?))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn spec(&self) -> String {
        self.0.spec.to_string()
    }

    #[getter]
    fn root(&self) -> usize {
        self.0.root_state()
    }

    fn state(&self, ordinal: usize) -> PyResult<String> {
        if ordinal >= self.0.len() {
            return Err(PyValueError::new_err(format!("ordinal {ordinal} out of range")));
        }
        Ok(self.0.render_ordinal(ordinal))
    }

    /// Materializes the symbolic mean matrix.
    #[pyo3(signature = (max_nonzeros=None))]
    fn mean_matrix(&self, py: Python<'_>, max_nonzeros: Option<u64>) -> PyResult<PyMeanMatrix> {
        let opts = BuildOptions { max_nonzeros };
        let m = py.detach(|| perc_core::build_matrix(&self.0, &opts)).map_err(to_py)?;
        Ok(PyMeanMatrix(m))
    }
}

#[pyclass(name = "MeanMatrix", frozen)]
struct PyMeanMatrix(perc_core::MeanMatrix);

#[pymethods]
impl PyMeanMatrix {
    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.0.nnz()
    }

    #[getter]
    fn root(&self) -> usize {
        self.0.root
    }

    /// Row `i` as `(column, polynomial)` pairs with polynomials rendered as text.
    fn row(&self, i: usize) -> PyResult<Vec<(usize, String)>> {
        if i >= self.0.dim() {
            return Err(PyValueError::new_err(format!("row {i} out of range")));
        }
        let (lo, hi) = (self.0.row_ptr[i] as usize, self.0.row_ptr[i + 1] as usize);
        Ok((lo..hi).map(|k| (self.0.cols[k] as usize, self.0.pool.get(self.0.poly_ids[k]).to_string())).collect())
    }

    /// Dense numeric matrix at `params`, as a list of rows.
    fn dense(&self, params: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        evaluate(&self.0, &params).map_err(to_py)?;
        let values = self.0.values_at(&params);
        let n = self.0.dim();
        let mut out = vec![vec![0.0; n]; n];
        for (i, row) in out.iter_mut().enumerate() {
            for k in self.0.row_ptr[i] as usize..self.0.row_ptr[i + 1] as usize {
                row[self.0.cols[k] as usize] = values[k];
            }
        }
        Ok(out)
    }

    /// Power-iteration spectral radius at `params`.
    fn spectral_radius(&self, py: Python<'_>, params: Vec<f64>) -> PyResult<(f64, bool)> {
        let op = evaluate(&self.0, &params).map_err(to_py)?;
        let r = py.detach(|| perc_core::spectral_radius(&op, &PowerOptions::default()));
        Ok((r.radius_estimate, r.converged))
    }

    #[pyo3(signature = (params, margin=1e-6))]
    fn is_subcritical(&self, py: Python<'_>, params: Vec<f64>, margin: f64) -> PyResult<bool> {
        let op = evaluate(&self.0, &params).map_err(to_py)?;
        let c = py.detach(|| certify(&op, margin, &PowerOptions::default())).map_err(to_py)?;
        Ok(c.subcritical)
    }

    fn expected_alive(&self, params: Vec<f64>, n: usize) -> PyResult<f64> {
        oracle::expected_alive(&self.0, &params, n).map_err(to_py)
    }
}

#[pyclass(name = "BoundResult", frozen, get_all)]
struct PyBoundResult {
    model: String,
    space: String,
    p2: Option<f64>,
    bound: f64,
    lambda_at_bound: f64,
    bisection_iterations: usize,
    wall_time: f64,
    state_count: usize,
    distinct_poly_count: usize,
}

#[pymethods]
impl PyBoundResult {
    fn __repr__(&self) -> String {
        format!("BoundResult(model='{}', space='{}', bound={})", self.model, self.space, self.bound)
    }
}

#[pyfunction]
#[pyo3(signature = (model, space, p2=None, backend="auto", tol=1e-7, margin=1e-6))]
fn lower_bound(
    py: Python<'_>,
    model: &str,
    space: &str,
    p2: Option<f64>,
    backend: &str,
    tol: f64,
    margin: f64,
) -> PyResult<PyBoundResult> {
    let model: perc_core::ModelSpec = model.parse().map_err(to_py)?;
    let spec = perc_core::SpaceSpec::parse(space, model.lattice).map_err(to_py)?;
    let opts = SearchOptions {
        bisect_tol: tol,
        margin,
        backend: backend.parse::<Backend>().map_err(to_py)?,
        ..SearchOptions::default()
    };
    let r = py.detach(|| perc_core::lower_bound(&model, spec, p2, &opts)).map_err(to_py)?;
    Ok(PyBoundResult {
        model: r.model.id().to_string(),
        space: r.space.to_string(),
        p2: r.p2,
        bound: r.bound,
        lambda_at_bound: r.lambda_at_bound,
        bisection_iterations: r.bisection_iterations,
        wall_time: r.wall_time,
        state_count: r.state_count,
        distinct_poly_count: r.distinct_poly_count,
    })
}

/// Exact probability that the cluster of the origin reaches level `n`.
#[pyfunction]
fn exact_reach_probability(py: Python<'_>, model: &str, n: usize, params: Vec<f64>) -> PyResult<f64> {
    let model: perc_core::ModelSpec = model.parse().map_err(to_py)?;
    py.detach(|| oracle::exact_reach_probability(&model, n, &params)).map_err(to_py)
}

/// Monte Carlo survival to `depth`: `(estimate, lower, upper)` with a 99% Wilson interval.
#[pyfunction]
#[pyo3(signature = (model, params, depth, trials, seed=0))]
fn mc_survival(py: Python<'_>, model: &str, params: Vec<f64>, depth: usize, trials: u64, seed: u64) -> PyResult<(f64, f64, f64)> {
    let model: perc_core::ModelSpec = model.parse().map_err(to_py)?;
    let e = py.detach(|| oracle::mc_survival(&model, &params, depth, trials, seed)).map_err(to_py)?;
    Ok((e.estimate, e.lower, e.upper))
}

#[pymodule]
fn perc_bound(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyStateSpace>()?;
    m.add_class::<PyMeanMatrix>()?;
    m.add_class::<PyBoundResult>()?;
    m.add_function(wrap_pyfunction!(lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(exact_reach_probability, m)?)?;
    m.add_function(wrap_pyfunction!(mc_survival, m)?)?;
    Ok(())
}
