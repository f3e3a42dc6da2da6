//! Python bindings. Build with `--features extension-module` for a wheel;
//! the module imports as `fedgo`.

use std::path::{Path, PathBuf};

use fedgo_core::cli::{parse_config, parse_config_str, run_experiment, ExperimentSpec};
use fedgo_core::confidence::ConfState;
use fedgo_core::federation::{self, Algorithm, Environment, Gamma, RunConfig};
use fedgo_core::linalg::SpdMatrix;
use fedgo_core::models::{MlpLayout, Model, ParamVector};
use fedgo_core::objectives::{self, SyntheticKind};
use fedgo_core::oracle::GldConfig;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: fedgo_core::Error) -> PyErr {
    match e {
        fedgo_core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn synthetic(name: &str) -> PyResult<SyntheticKind> {
    match name {
        "hartmann6" => Ok(SyntheticKind::Hartmann6),
        "cosine8" => Ok(SyntheticKind::Cosine8),
        _ => Err(PyValueError::new_err(format!(
            "unknown environment `{name}` (expected hartmann6 or cosine8)"
        ))),
    }
}

/// Symmetric positive definite matrix kept as a Cholesky factor.
#[pyclass(name = "SpdMatrix", module = "fedgo", skip_from_py_object)]
#[derive(Clone)]
struct PySpdMatrix {
    inner: SpdMatrix,
}

#[pymethods]
impl PySpdMatrix {
    /// `lam · I` of size `dim`.
    #[staticmethod]
    fn identity(dim: usize, lam: f64) -> PyResult<Self> {
        SpdMatrix::identity(dim, lam).map(|inner| Self { inner }).map_err(to_py)
    }

    /// From a row-major list of `dim²` values.
    #[staticmethod]
    fn from_dense(dim: usize, values: Vec<f64>) -> PyResult<Self> {
        SpdMatrix::from_dense(dim, &values).map(|inner| Self { inner }).map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn logdet(&self) -> f64 {
        self.inner.logdet()
    }

    fn to_dense(&self) -> Vec<f64> {
        self.inner.to_dense()
    }

    /// In place `A ← A + g gᵀ`.
    fn rank1_update(&mut self, g: Vec<f64>) -> PyResult<()> {
        self.inner.rank1_update_in_place(&g).map_err(to_py)
    }

    fn solve(&self, rhs: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.solve(&rhs).map_err(to_py)
    }

    fn multiply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.multiply(&x).map_err(to_py)
    }

    /// `gᵀ A⁻¹ g`
    fn quad_form_inv(&self, g: Vec<f64>) -> PyResult<f64> {
        self.inner.quad_form_inv(&g).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("SpdMatrix(dim={}, logdet={})", self.inner.dim(), self.inner.logdet())
    }
}

/// A linear model or a one-hidden-layer sigmoid MLP.
#[pyclass(name = "Model", module = "fedgo", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: Model,
}

impl PyModel {
    fn params(&self, w: Vec<f64>) -> PyResult<ParamVector> {
        self.inner.params(w).map_err(to_py)
    }
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn linear(dim: usize) -> Self {
        Self {
            inner: Model::Linear { dim },
        }
    }

    #[staticmethod]
    fn mlp(input_dim: usize, hidden: usize) -> PyResult<Self> {
        let layout = MlpLayout::new(input_dim, hidden).map_err(to_py)?;
        Ok(Self {
            inner: Model::Mlp(layout),
        })
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }

    fn forward(&self, w: Vec<f64>, x: Vec<f64>) -> PyResult<f64> {
        let w = self.params(w)?;
        self.inner.forward(&w, &x).map_err(to_py)
    }

    /// Gradient with respect to the parameters.
    fn grad(&self, w: Vec<f64>, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let w = self.params(w)?;
        self.inner.grad(&w, &x).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        match self.inner {
            Model::Linear { dim } => format!("Model.linear({dim})"),
            Model::Mlp(_) => format!(
                "Model.mlp(input_dim={}, param_dim={})",
                self.inner.input_dim(),
                self.inner.param_dim()
            ),
        }
    }
}

/// Sufficient statistics and confidence ball around an anchor.
#[pyclass(name = "ConfState", module = "fedgo")]
struct PyConfState {
    inner: ConfState,
}

#[pymethods]
impl PyConfState {
    #[new]
    fn new(model: &PyModel, w0: Vec<f64>, lam: f64) -> PyResult<Self> {
        let w0 = model.params(w0)?;
        ConfState::new(model.inner, w0, lam)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn absorb(&mut self, x: Vec<f64>, y: f64) -> PyResult<()> {
        self.inner.absorb(&x, y).map_err(to_py)
    }

    fn ucb(&self, beta: f64, x: Vec<f64>) -> PyResult<f64> {
        self.inner.ucb_score(beta, &x).map_err(to_py)
    }

    fn trigger_value(&self) -> f64 {
        self.inner.trigger_value()
    }

    #[getter]
    fn w_hat(&self) -> Vec<f64> {
        self.inner.w_hat().to_vec()
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.inner.b().to_vec()
    }

    #[getter]
    fn sigma(&self) -> PySpdMatrix {
        PySpdMatrix {
            inner: self.inner.sigma().clone(),
        }
    }
}

#[pyclass(name = "Summary", module = "fedgo", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PySummary {
    final_regret: f64,
    final_comm: u64,
    phase1_comm: u64,
    phase2_comm: u64,
    sync_count: u64,
    param_dim: usize,
    beta: f64,
    gamma: f64,
    lambda_: f64,
    phase1_len: usize,
}

#[pymethods]
impl PySummary {
    fn __repr__(&self) -> String {
        format!(
            "Summary(final_regret={}, final_comm={}, sync_count={})",
            self.final_regret, self.final_comm, self.sync_count
        )
    }
}

type RecordRow = (usize, String, usize, usize, f64, f64, f64, u64, bool);

/// Per-step records of one run plus its summary.
#[pyclass(name = "Trajectory", module = "fedgo", frozen)]
struct PyTrajectory {
    inner: federation::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn summary(&self) -> PySummary {
        let s = self.inner.summary;
        PySummary {
            final_regret: s.final_regret,
            final_comm: s.final_comm,
            phase1_comm: s.phase1_comm,
            phase2_comm: s.phase2_comm,
            sync_count: s.sync_count,
            param_dim: s.param_dim,
            beta: s.beta,
            gamma: s.gamma,
            lambda_: s.lambda,
            phase1_len: s.phase1_len,
        }
    }

    /// `(t, phase, client, arm, reward, inst_regret, cum_regret, cum_comm, sync)` tuples.
    fn records(&self) -> Vec<RecordRow> {
        self.inner
            .records
            .iter()
            .map(|r| {
                (
                    r.t,
                    r.phase.to_string(),
                    r.client,
                    r.arm,
                    r.reward,
                    r.inst_regret,
                    r.cum_regret,
                    r.cum_comm,
                    r.sync,
                )
            })
            .collect()
    }

    fn cum_regret(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.cum_regret).collect()
    }

    fn cum_comm(&self) -> Vec<u64> {
        self.inner.records.iter().map(|r| r.cum_comm).collect()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }
}

/// Runs one simulation. `gamma=None` uses the automatic threshold.
#[pyfunction]
#[pyo3(signature = (
    algorithm = "fedgo",
    environment = "hartmann6",
    arms = 50,
    clients = 20,
    rounds = 100,
    hidden = None,
    seed = 0,
    gamma = None,
    gld_iterations = None,
    noise_sigma = None,
))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    algorithm: &str,
    environment: &str,
    arms: usize,
    clients: usize,
    rounds: usize,
    hidden: Option<usize>,
    seed: u64,
    gamma: Option<f64>,
    gld_iterations: Option<usize>,
    noise_sigma: Option<f64>,
) -> PyResult<PyTrajectory> {
    let defaults = RunConfig::default();
    let cfg = RunConfig {
        algorithm: algorithm.parse::<Algorithm>().map_err(to_py)?,
        environment: Environment::Synthetic {
            kind: synthetic(environment)?,
            arms,
        },
        clients,
        rounds,
        hidden: hidden.unwrap_or(defaults.hidden),
        seed,
        gamma: gamma.map(Gamma::Fixed).unwrap_or(defaults.gamma),
        gld: GldConfig {
            iterations: gld_iterations.unwrap_or(defaults.gld.iterations),
            ..defaults.gld
        },
        noise_sigma: noise_sigma.unwrap_or(defaults.noise_sigma),
        ..defaults
    };
    let traj = py.detach(|| federation::run(&cfg)).map_err(to_py)?;
    Ok(PyTrajectory { inner: traj })
}

fn load_spec(config: &str, is_path: bool) -> PyResult<ExperimentSpec> {
    if is_path {
        parse_config(Path::new(config)).map_err(to_py)
    } else {
        parse_config_str(config, Path::new(".")).map_err(to_py)
    }
}

/// Parses a TOML experiment config and returns `(algorithm, seeds)` pairs.
/// Pass `text=True` to parse a string instead of a file.
#[pyfunction]
#[pyo3(signature = (config, text = false))]
fn parse_experiment(config: &str, text: bool) -> PyResult<Vec<(String, Vec<u64>)>> {
    let spec = load_spec(config, !text)?;
    Ok(spec
        .jobs
        .iter()
        .map(|(alg, _)| (alg.name().to_string(), spec.seeds.clone()))
        .collect())
}

/// Same as `fedgo run`: writes CSVs to `out` and returns the file list.
/// Raises if any run failed.
#[pyfunction]
#[pyo3(signature = (config, out = None, threads = None))]
fn run_config(py: Python<'_>, config: &str, out: Option<PathBuf>, threads: Option<usize>) -> PyResult<Vec<PathBuf>> {
    let mut spec = load_spec(config, true)?;
    if let Some(out) = out {
        spec.out_dir = out;
    }
    let report = py.detach(|| run_experiment(&spec, threads)).map_err(to_py)?;
    let failed: Vec<String> = report
        .failures()
        .map(|r| format!("{} seed {}: {}", r.algorithm, r.seed, r.result.as_ref().unwrap_err()))
        .collect();
    if !failed.is_empty() {
        return Err(PyValueError::new_err(failed.join("; ")));
    }
    Ok(report.files)
}

#[pyfunction]
fn hartmann6(x: Vec<f64>) -> PyResult<f64> {
    objectives::hartmann6(&x).map_err(to_py)
}

#[pyfunction]
fn cosine8(x: Vec<f64>) -> PyResult<f64> {
    objectives::cosine8(&x).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "fedgo")]
fn fedgo_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpdMatrix>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyConfState>()?;
    m.add_class::<PySummary>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(parse_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(hartmann6, m)?)?;
    m.add_function(wrap_pyfunction!(cosine8, m)?)?;
    m.add("ALGORITHMS", Algorithm::ALL.map(|a| a.name()).to_vec())?;
    Ok(())
}
