use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use navgraph::elicitation::{self, EdgePriorTarget};
use navgraph::grid::{log_spaced, run_grid_problem, Criterion, GridSpec};
use navgraph::problem::Problem;
use navgraph::{postprocess, simgen, types, AuxiliaryMatrix, DataMatrix, Engine, Variant};

create_exception!(navgraph, NoConvergenceError, PyException);

fn to_py(e: navgraph::Error) -> PyErr {
    match e {
        navgraph::Error::NoConvergence(_) | navgraph::Error::GridFailed(_) => {
            NoConvergenceError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

fn to_rows<T: Copy + nalgebra::Scalar>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse_variant(s: &str) -> PyResult<Variant> {
    match s.to_ascii_lowercase().as_str() {
        "gmstar" | "gm*" => Ok(Variant::GMStar),
        "gmn" => Ok(Variant::GMN),
        "gmss" => Ok(Variant::GMSS),
        _ => Err(PyValueError::new_err(format!("unknown model '{s}'"))),
    }
}

fn parse_engine(s: &str) -> PyResult<Engine> {
    match s.to_ascii_lowercase().as_str() {
        "vbecm" => Ok(Engine::Vbecm),
        "ecm" => Ok(Engine::Ecm),
        _ => Err(PyValueError::new_err(format!("unknown engine '{s}'"))),
    }
}

fn parse_criterion(s: &str) -> PyResult<Criterion> {
    match s.to_ascii_lowercase().as_str() {
        "aic" => Ok(Criterion::Aic),
        "bic" => Ok(Criterion::Bic),
        "ebic" => Ok(Criterion::Ebic),
        _ => Err(PyValueError::new_err(format!("unknown criterion '{s}'"))),
    }
}

/// Result of a grid-searched fit.
#[pyclass(name = "Fit", frozen)]
struct PyFit {
    inner: types::FitResult,
}

#[pymethods]
impl PyFit {
    #[getter]
    fn model(&self) -> &'static str {
        self.inner.variant.label()
    }

    #[getter]
    fn nu0(&self) -> f64 {
        self.inner.nu0_used
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn edge_ppi(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.edge_ppi)
    }

    #[getter]
    fn omega(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.omega())
    }

    #[getter]
    fn var_ppi(&self) -> Vec<f64> {
        self.inner.var_ppi.clone()
    }

    #[getter]
    fn beta_mean(&self) -> Vec<f64> {
        self.inner.effects.iter().map(|e| e.mean).collect()
    }

    #[getter]
    fn elbo_trace(&self) -> Vec<f64> {
        self.inner.elbo_trace.clone()
    }

    #[getter]
    fn criteria<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        d.set_item("aic", self.inner.criteria.aic)?;
        d.set_item("bic", self.inner.criteria.bic)?;
        d.set_item("ebic", self.inner.criteria.ebic)?;
        Ok(d)
    }

    /// Indices (i, j), i < j, of the edges with PPI >= 0.5.
    fn selected_edges(&self) -> Vec<(usize, usize)> {
        let p = self.inner.edge_ppi.nrows();
        (0..p)
            .flat_map(|j| (0..j).map(move |i| (i, j)))
            .filter(|&(i, j)| self.inner.edge_ppi[(i, j)] >= 0.5)
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Fit(model={}, nu0={}, converged={}, iterations={})",
            self.inner.variant, self.inner.nu0_used, self.inner.converged, self.inner.iterations
        )
    }
}

#[pyfunction]
fn center_columns(data: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let d = DataMatrix::new(to_matrix(&data)?).map_err(to_py)?;
    Ok(to_rows(types::center_columns(&d).map_err(to_py)?.values()))
}

#[pyfunction]
fn owen_t(h: f64, a: f64) -> f64 {
    elicitation::owen_t(h, a)
}

/// Prior mean and sd of the edge count implied by (n0, t0_sq).
#[pyfunction]
fn prior_edge_moments(n0: f64, t0_sq: f64, n_nodes: usize) -> PyResult<(f64, f64)> {
    elicitation::prior_edge_moments(n0, t0_sq, n_nodes).map_err(to_py)
}

/// (n0, t0_sq) matching a prior edge-count mean and sd.
#[pyfunction]
fn elicit_hyperparams(mean_edges: f64, sd_edges: f64, n_nodes: usize) -> PyResult<(f64, f64)> {
    let target = EdgePriorTarget::new(mean_edges, sd_edges, n_nodes).map_err(to_py)?;
    elicitation::elicit_hyperparams(&target).map_err(to_py)
}

#[pyfunction]
fn fdr_threshold(ppis: Vec<f64>, target: f64) -> f64 {
    postprocess::fdr_threshold(&ppis, target)
}

#[pyfunction]
#[pyo3(signature = (truth, scores, max_fpr = 0.1))]
fn pauc(truth: Vec<bool>, scores: Vec<f64>, max_fpr: f64) -> PyResult<f64> {
    postprocess::pauc(&truth, &scores, max_fpr).map_err(to_py)
}

/// Generates one replicate of a named scenario.
#[pyfunction]
#[pyo3(signature = (scenario = "reference", seed = 1))]
fn simulate<'py>(py: Python<'py>, scenario: &str, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let spec = navgraph::cli::scenario_by_name(scenario).map_err(to_py)?;
    let rep = simgen::generate(&spec.with_seed(seed)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("data", to_rows(rep.data.values()))?;
    d.set_item("aux", to_rows(rep.aux.values()))?;
    d.set_item("adjacency", to_rows(&rep.adjacency))?;
    d.set_item("effects", rep.effects.clone())?;
    d.set_item("omega", to_rows(&rep.omega))?;
    d.set_item("zeta", rep.zeta)?;
    Ok(d)
}

/// Centres the data, then fits the model over a grid of spike scales and
/// returns the fit selected by the criterion.
#[pyfunction]
#[pyo3(signature = (data, aux = None, model = "gmss", engine = "vbecm", nu0_grid = None, criterion = "aic", seed = 0, workers = 1))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    data: Vec<Vec<f64>>,
    aux: Option<Vec<Vec<f64>>>,
    model: &str,
    engine: &str,
    nu0_grid: Option<Vec<f64>>,
    criterion: &str,
    seed: u64,
    workers: usize,
) -> PyResult<PyFit> {
    let data = DataMatrix::new(to_matrix(&data)?).map_err(to_py)?;
    let aux = match aux {
        Some(v) => AuxiliaryMatrix::new(to_matrix(&v)?).map_err(to_py)?,
        None => AuxiliaryMatrix::empty(data.n_nodes()),
    };
    let mut variant = parse_variant(model)?;
    if aux.n_vars() == 0 {
        variant = Variant::GMStar;
    }
    let engine = parse_engine(engine)?;
    let mut cfg =
        types::ModelConfig::for_dimensions(variant, data.n_nodes(), aux.n_vars()).map_err(to_py)?;
    cfg.seed = seed;
    let grid = GridSpec {
        nu0_values: nu0_grid.unwrap_or_else(|| log_spaced(0.01, 1.0, 9)),
        criterion: parse_criterion(criterion)?,
        workers,
        ..GridSpec::default()
    };
    let centred = types::center_columns(&data).map_err(to_py)?;
    let problem = Problem::new(&centred, &aux, variant).map_err(to_py)?;
    let outcome = py
        .detach(|| run_grid_problem(&problem, &cfg, &grid, engine))
        .map_err(to_py)?;
    Ok(PyFit {
        inner: outcome.into_best(),
    })
}

#[pymodule]
#[pyo3(name = "navgraph")]
fn navgraph_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NoConvergenceError", m.py().get_type::<NoConvergenceError>())?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(center_columns, m)?)?;
    m.add_function(wrap_pyfunction!(owen_t, m)?)?;
    m.add_function(wrap_pyfunction!(prior_edge_moments, m)?)?;
    m.add_function(wrap_pyfunction!(elicit_hyperparams, m)?)?;
    m.add_function(wrap_pyfunction!(fdr_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(pauc, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    Ok(())
}
