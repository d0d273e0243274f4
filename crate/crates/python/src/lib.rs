//! Python bindings: datasets, covariate selections, the estimators, the
//! simulation study and the self-check.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use causal_dr_core::data::{CovariateSpec, Dataset, Scenario};
use causal_dr_core::estimators::{estimate_many, EstimateResult, Method, ResamplingConfig};
use causal_dr_core::numerics::{Matrix, RngStream};
use causal_dr_core::selfcheck::{run_selfcheck, Mutation};
use causal_dr_core::simulation::{apply_scenario, generate_data_with, run_simulation, summarize, Dgp, SimConfig};

fn err(e: causal_dr_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Observed sample: outcome, 0/1 treatment and named covariate columns.
#[pyclass(name = "Dataset", module = "causal_dr")]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// `x` is a list of rows.
    #[new]
    fn new(y: Vec<f64>, z: Vec<f64>, x: Vec<Vec<f64>>, names: Vec<String>) -> PyResult<Self> {
        let n = y.len();
        let matrix = if x.is_empty() {
            Matrix::zeros(n, names.len())
        } else {
            Matrix::from_rows(&x).map_err(err)?
        };
        Ok(Self {
            inner: Dataset::new(y, z, matrix, names).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y().to_vec()
    }

    #[getter]
    fn z(&self) -> Vec<f64> {
        self.inner.z().to_vec()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    /// Covariates as a list of rows.
    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        let x = self.inner.x();
        (0..x.rows()).map(|i| x.row(i).to_vec()).collect()
    }

    fn treated_fraction(&self) -> f64 {
        self.inner.treated_fraction()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, covariates={:?})", self.inner.n(), self.inner.names())
    }
}

/// Outcome-model (`s`) and treatment-model (`b`) covariates.
#[pyclass(name = "CovariateSpec", module = "causal_dr")]
struct PyCovariateSpec {
    inner: CovariateSpec,
    s_labels: Vec<String>,
    b_labels: Vec<String>,
}

impl PyCovariateSpec {
    fn wrap(inner: CovariateSpec, data: &Dataset) -> Self {
        Self {
            s_labels: inner.s_columns.iter().map(|t| t.label(data)).collect(),
            b_labels: inner.b_columns.iter().map(|t| t.label(data)).collect(),
            inner,
        }
    }
}

#[pymethods]
impl PyCovariateSpec {
    /// Comma-separated column names; prefix `abs:` for `|x| / sqrt(1 - 2/pi)`.
    #[new]
    #[pyo3(signature = (data, s_cols, b_cols, interactions = false))]
    fn new(data: &PyDataset, s_cols: &str, b_cols: &str, interactions: bool) -> PyResult<Self> {
        let names = data.inner.names();
        let mut spec = CovariateSpec::new(
            CovariateSpec::parse_terms(s_cols, names).map_err(err)?,
            CovariateSpec::parse_terms(b_cols, names).map_err(err)?,
        );
        if interactions {
            spec = spec.with_interactions();
        }
        Ok(Self::wrap(spec, &data.inner))
    }

    /// The covariate sets of simulation scenario `"I"` or `"II"`.
    #[staticmethod]
    fn scenario(data: &PyDataset, scenario: &str) -> PyResult<Self> {
        let sc: Scenario = scenario.parse().map_err(err)?;
        Ok(Self::wrap(apply_scenario(&data.inner, sc).map_err(err)?, &data.inner))
    }

    #[getter]
    fn s_cols(&self) -> Vec<String> {
        self.s_labels.clone()
    }

    #[getter]
    fn b_cols(&self) -> Vec<String> {
        self.b_labels.clone()
    }

    fn __repr__(&self) -> String {
        format!("CovariateSpec(s={:?}, b={:?})", self.s_labels, self.b_labels)
    }
}

/// Point estimate, standard error, Wald interval and diagnostics.
#[pyclass(name = "EstimateResult", module = "causal_dr", get_all)]
struct PyEstimateResult {
    method: String,
    label: String,
    point: f64,
    se: f64,
    ci_low: f64,
    ci_high: f64,
    draws: Option<Vec<f64>>,
    diagnostics: BTreeMap<String, f64>,
    notes: Vec<String>,
    propensity_coef: Option<Vec<f64>>,
}

impl From<EstimateResult> for PyEstimateResult {
    fn from(r: EstimateResult) -> Self {
        Self {
            method: r.method.tag().to_string(),
            label: r.method.label().to_string(),
            point: r.point,
            se: r.se,
            ci_low: r.ci.0,
            ci_high: r.ci.1,
            draws: r.draws,
            diagnostics: r.diagnostics,
            notes: r.notes,
            propensity_coef: r.propensity_coef,
        }
    }
}

#[pymethods]
impl PyEstimateResult {
    fn covers(&self, truth: f64) -> bool {
        (self.point - truth).abs() <= 1.96 * self.se
    }

    fn __repr__(&self) -> String {
        format!("EstimateResult({}: point={:.6}, se={:.6})", self.method, self.point, self.se)
    }
}

/// Data from the simulation study's generating process (`dgp` is
/// `"standard"` or `"exchanged"`).
#[pyfunction]
#[pyo3(signature = (n, seed, stream_id = 0, dgp = "standard"))]
fn generate_data(n: usize, seed: u64, stream_id: u64, dgp: &str) -> PyResult<PyDataset> {
    let dgp: Dgp = dgp.parse().map_err(err)?;
    Ok(PyDataset {
        inner: generate_data_with(n, dgp, &RngStream::new(seed, stream_id)).map_err(err)?,
    })
}

/// Runs the estimators named in `methods` (comma-separated tags, `or_ps`,
/// or `all`).
#[pyfunction]
#[pyo3(signature = (methods, data, spec, draws = 200, boot = 200, stabilize = true, seed = 0, stream_id = 0))]
#[allow(clippy::too_many_arguments)]
fn estimate(
    py: Python<'_>,
    methods: &str,
    data: &PyDataset,
    spec: &PyCovariateSpec,
    draws: usize,
    boot: usize,
    stabilize: bool,
    seed: u64,
    stream_id: u64,
) -> PyResult<Vec<PyEstimateResult>> {
    let methods = Method::parse_list(methods).map_err(err)?;
    let cfg = ResamplingConfig {
        n_draws: draws,
        n_boot: boot,
        stabilize,
    };
    let rng = RngStream::new(seed, stream_id);
    let results = py.detach(|| estimate_many(&methods, &data.inner, &spec.inner, &cfg, &rng));
    results
        .into_iter()
        .map(|(m, r)| r.map(PyEstimateResult::from).map_err(|e| PyValueError::new_err(format!("{m}: {e}"))))
        .collect()
}

/// Tags of all estimators, in table order.
#[pyfunction]
fn methods() -> Vec<&'static str> {
    Method::ALL.iter().map(|m| m.tag()).collect()
}

/// Runs the simulation study and returns one summary dict per estimator.
#[pyfunction]
#[pyo3(signature = (n = 500, reps = 1000, seed = 42, scenario = "I", estimators = "all", draws = 200, boot = 200, threads = 1, dgp = "standard"))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    n: usize,
    reps: usize,
    seed: u64,
    scenario: &str,
    estimators: &str,
    draws: usize,
    boot: usize,
    threads: usize,
    dgp: &str,
) -> PyResult<Vec<BTreeMap<&'static str, Py<PyAny>>>> {
    let config = SimConfig {
        n,
        reps,
        seed,
        scenario: scenario.parse().map_err(err)?,
        dgp: dgp.parse().map_err(err)?,
        methods: Method::parse_list(estimators).map_err(err)?,
        resampling: ResamplingConfig {
            n_draws: draws,
            n_boot: boot,
            stabilize: true,
        },
        threads,
    };
    let rows = py.detach(|| run_simulation(&config)).map_err(err)?;
    summarize(&rows)
        .into_iter()
        .map(|r| {
            let mut d: BTreeMap<&'static str, Py<PyAny>> = BTreeMap::new();
            d.insert("estimator", r.estimator.tag().into_pyobject(py)?.into_any().unbind());
            d.insert("label", r.estimator.label().into_pyobject(py)?.into_any().unbind());
            for (k, v) in [
                ("mean_point", r.mean_point),
                ("rel_bias_pct", r.rel_bias_pct),
                ("mc_sd", r.mc_sd),
                ("mean_se", r.mean_se),
                ("mc_error", r.mc_error),
                ("coverage_pct", r.coverage_pct),
            ] {
                d.insert(k, v.into_pyobject(py)?.into_any().unbind());
            }
            d.insert("n_ok", r.n_ok.into_pyobject(py)?.into_any().unbind());
            d.insert("n_failed", r.n_failed.into_pyobject(py)?.into_any().unbind());
            Ok(d)
        })
        .collect()
}

/// `(name, residual, tolerance, passed)` for every self-check.
#[pyfunction]
fn selfcheck(py: Python<'_>) -> Vec<(String, f64, f64, bool)> {
    py.detach(|| run_selfcheck(Mutation::None))
        .into_iter()
        .map(|c| (c.name.to_string(), c.residual, c.tolerance, c.passed))
        .collect()
}

#[pymodule]
fn causal_dr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyCovariateSpec>()?;
    m.add_class::<PyEstimateResult>()?;
    m.add_function(wrap_pyfunction!(generate_data, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(methods, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(selfcheck, m)?)?;
    m.add("TRUE_EFFECT", causal_dr_core::simulation::TRUE_EFFECT)?;
    Ok(())
}
