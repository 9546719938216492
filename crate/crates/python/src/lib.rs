//! Python bindings: LGL rules, dyadic partitions, discretizations on the
//! nine-patch square, and experiment sweeps.

use dgasm::dyadic::DyadicFamily;
use dgasm::experiment::{measure_stage, run_sweep, scenario_mesh, to_csv, to_json, Discretization as CoreDisc, ExperimentConfig, Point};
use dgasm::lgl::{Interval, LglRule};
use dgasm::sparse::CsrMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// LGL nodes and weights of degree `p` on `[lo, hi]`.
#[pyfunction]
#[pyo3(signature = (p, lo = -1.0, hi = 1.0))]
fn lgl(p: usize, lo: f64, hi: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let rule = LglRule::new(p, Interval::new(lo, hi).map_err(err)?).map_err(err)?;
    Ok((rule.nodes().to_vec(), rule.weights().to_vec()))
}

/// Breakpoints on [-1, 1] of the dyadic partition paired with degree `p`.
#[pyfunction]
#[pyo3(signature = (p, alpha = 1.2))]
fn dyadic_nodes(p: usize, alpha: f64) -> PyResult<Vec<f64>> {
    let fam = DyadicFamily::build(p, alpha).map_err(err)?;
    Ok(fam.get(p).map_err(err)?.nodes())
}

/// DG-norm error of the interior penalty solution for `sin(pi x) sin(pi y)`
/// on the nine-patch square with all patches of degree `p`.
#[pyfunction]
#[pyo3(signature = (p, gamma = 3.0))]
fn sine_problem_error(p: usize, gamma: f64) -> PyResult<f64> {
    dgasm::experiment::sine_problem_error(p, gamma).map_err(err)
}

/// Header line of the CSV output.
#[pyfunction]
fn csv_header() -> &'static str {
    dgasm::experiment::CSV_HEADER
}

/// A validated experiment configuration.
#[pyclass(frozen)]
struct Experiment {
    cfg: ExperimentConfig,
}

#[pymethods]
impl Experiment {
    #[new]
    fn new(config_json: &str) -> PyResult<Self> {
        Ok(Self { cfg: ExperimentConfig::from_json(config_json).map_err(err)? })
    }

    /// A copy with `key=value` overrides applied.
    fn with_overrides(&self, sets: Vec<String>) -> PyResult<Self> {
        Ok(Self { cfg: self.cfg.with_overrides(&sets).map_err(err)? })
    }

    /// The configuration with all defaults filled in, as JSON.
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.cfg).map_err(err)
    }

    /// Grid points as `(p, beta1, rho1)` tuples in output order.
    fn points(&self) -> Vec<(usize, f64, f64)> {
        self.cfg.points().into_iter().map(|p| (p.p, p.beta1, p.rho1)).collect()
    }

    /// Runs the sweep and returns one dict per grid point.
    #[pyo3(signature = (threads = None))]
    fn run<'py>(&self, py: Python<'py>, threads: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
        let cfg = self.cfg.clone();
        let rows = py.detach(|| run_sweep(&cfg, threads)).map_err(err)?;
        json_to_py(py, &to_json(&rows).map_err(err)?)
    }

    /// Runs the sweep and returns the CSV text.
    #[pyo3(signature = (threads = None))]
    fn run_csv(&self, py: Python<'_>, threads: Option<usize>) -> PyResult<String> {
        let cfg = self.cfg.clone();
        Ok(to_csv(&py.detach(|| run_sweep(&cfg, threads)).map_err(err)?))
    }

    fn __repr__(&self) -> String {
        format!("Experiment({})", serde_json::to_string(&self.cfg).unwrap_or_default())
    }
}

fn triplets(m: &CsrMatrix) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut out = (Vec::with_capacity(m.nnz()), Vec::with_capacity(m.nnz()), Vec::with_capacity(m.nnz()));
    for (i, j, v) in m.triplets() {
        out.0.push(i);
        out.1.push(j);
        out.2.push(v);
    }
    out
}

/// Interior penalty and conforming stiffness matrices on the nine-patch
/// square `[0, 3]^2` with per-patch degrees (patch `i + 3j`).
#[pyclass(frozen)]
struct Discretization {
    inner: CoreDisc,
    gamma: f64,
}

#[pymethods]
impl Discretization {
    #[new]
    #[pyo3(signature = (degrees, gamma = 3.0))]
    fn new(py: Python<'_>, degrees: Vec<usize>, gamma: f64) -> PyResult<Self> {
        let inner = py.detach(|| scenario_mesh(&degrees).and_then(|m| CoreDisc::new(m, gamma))).map_err(err)?;
        Ok(Self { inner, gamma })
    }

    #[getter]
    fn ndof_dg(&self) -> usize {
        self.inner.dg.dim()
    }

    #[getter]
    fn ndof_cg(&self) -> usize {
        self.inner.cg.ndofs()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Interior penalty matrix as `(rows, cols, values)`.
    fn dg_matrix(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        triplets(&self.inner.a)
    }

    /// Conforming stiffness matrix as `(rows, cols, values)`.
    fn cg_matrix(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        triplets(&self.inner.a1)
    }

    /// Spectrum estimate of the preconditioner selected by `experiment.stage`;
    /// `beta1` and `rho1` default to the experiment's values.
    #[pyo3(signature = (experiment, beta1 = None, rho1 = None))]
    fn measure<'py>(&self, py: Python<'py>, experiment: &Experiment, beta1: Option<f64>, rho1: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
        let cfg = &experiment.cfg;
        let p = self.inner.mesh.patches().iter().flat_map(|pa| pa.degrees.iter().copied()).max().unwrap_or(1);
        let point = Point { p, beta1: beta1.unwrap_or(cfg.beta1), rho1: rho1.unwrap_or(cfg.rho1) };
        let m = py.detach(|| measure_stage(&self.inner, cfg.stage, cfg, &point)).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("kappa", m.spectrum.kappa)?;
        d.set_item("lambda_min", m.spectrum.lambda_min)?;
        d.set_item("lambda_max", m.spectrum.lambda_max)?;
        d.set_item("converged", m.spectrum.converged)?;
        d.set_item("lanczos_iterations", m.spectrum.iterations)?;
        d.set_item("history", PyList::new(py, &m.spectrum.history)?)?;
        d.set_item("pcg_iters", m.pcg_iters)?;
        d.set_item("ndof_dfe", m.ndof_dfe)?;
        Ok(d)
    }
}

#[pymodule]
fn pydgasm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(lgl, m)?)?;
    m.add_function(wrap_pyfunction!(dyadic_nodes, m)?)?;
    m.add_function(wrap_pyfunction!(sine_problem_error, m)?)?;
    m.add_function(wrap_pyfunction!(csv_header, m)?)?;
    m.add_class::<Experiment>()?;
    m.add_class::<Discretization>()?;
    Ok(())
}
