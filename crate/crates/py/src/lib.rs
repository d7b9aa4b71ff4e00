//! Python bindings: a `TwoSample` class exposing the estimator suite, plus
//! scenario simulation driven by TOML/JSON text.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tailshift::classic;
use tailshift::density::fit_adaptive_density;
use tailshift::inference;
use tailshift::parametric::{self, AdditiveModel, MultiplicativeModel, TreatmentModel};
use tailshift::sample::DiagValue;
use tailshift::shift::{self, EifMode};
use tailshift::simulation::{run_scenario, ScenarioSpec};
use tailshift::trimmed::{self, AdaptKind, TrimMode, TrimSpec};
use tailshift::{Error, TwoSampleView};

fn to_py_err(e: Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// Point estimate with variance, method tag, and diagnostics dict.
#[pyclass(name = "Estimate")]
struct PyEstimate {
    #[pyo3(get)]
    tau_hat: f64,
    #[pyo3(get)]
    var_hat: Option<f64>,
    #[pyo3(get)]
    method: String,
    diagnostics: Vec<(String, DiagValue)>,
}

impl PyEstimate {
    fn from_core(est: tailshift::Estimate) -> Self {
        PyEstimate {
            tau_hat: est.tau_hat,
            var_hat: est.var_hat,
            method: est.method.name().to_string(),
            diagnostics: est.diagnostics.into_iter().collect(),
        }
    }
}

#[pymethods]
impl PyEstimate {
    #[getter]
    fn diagnostics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for (k, v) in &self.diagnostics {
            match v {
                DiagValue::Num(x) => d.set_item(k, x)?,
                DiagValue::Flag(b) => d.set_item(k, b)?,
                DiagValue::Text(s) => d.set_item(k, s)?,
                DiagValue::Series(xs) => d.set_item(k, xs.clone())?,
            }
        }
        Ok(d)
    }

    /// Wald confidence interval (lo, hi) at the given level.
    fn ci(&self, level: f64) -> PyResult<(f64, f64)> {
        let var = self
            .var_hat
            .ok_or_else(|| PyValueError::new_err("estimate carries no variance"))?;
        let ci = inference::normal_ci_from(self.tau_hat, var, level, inference::CiSource::Analytic)
            .map_err(to_py_err)?;
        Ok((ci.lo, ci.hi))
    }

    fn __repr__(&self) -> String {
        format!(
            "Estimate(method='{}', tau_hat={}, var_hat={:?})",
            self.method, self.tau_hat, self.var_hat
        )
    }
}

/// Sorted two-arm sample; the entry point for every estimator.
#[pyclass(name = "TwoSample")]
struct PyTwoSample {
    view: TwoSampleView,
}

#[pymethods]
impl PyTwoSample {
    #[new]
    fn new(control: Vec<f64>, treated: Vec<f64>) -> PyResult<Self> {
        Ok(PyTwoSample {
            view: TwoSampleView::from_arms(control, treated).map_err(to_py_err)?,
        })
    }

    /// Build from (y, z) pairs with z in {0, 1}.
    #[staticmethod]
    fn from_pairs(pairs: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(PyTwoSample {
            view: TwoSampleView::split_sample(pairs).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn n0(&self) -> usize {
        self.view.n0()
    }

    #[getter]
    fn n1(&self) -> usize {
        self.view.n1()
    }

    #[getter]
    fn p(&self) -> f64 {
        self.view.p()
    }

    /// Empirical quantile-treatment-effect curve at the given levels.
    fn qte(&self, grid: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
        tailshift::qte_curve(&self.view, &grid).map_err(to_py_err)
    }

    fn diff_means(&self) -> PyEstimate {
        PyEstimate::from_core(classic::diff_means(&self.view))
    }

    fn diff_medians(&self) -> PyResult<PyEstimate> {
        let fit0 = fit_adaptive_density(self.view.control()).map_err(to_py_err)?;
        let fit1 = fit_adaptive_density(self.view.treated()).map_err(to_py_err)?;
        Ok(PyEstimate::from_core(
            classic::diff_medians(&self.view, &fit0, &fit1).map_err(to_py_err)?,
        ))
    }

    /// Hodges-Lehmann point estimate; `plugin_variance` attaches the
    /// rank-based analytic variance.
    #[pyo3(signature = (plugin_variance = false))]
    fn hodges_lehmann(&self, plugin_variance: bool) -> PyResult<PyEstimate> {
        if plugin_variance {
            let fit0 = fit_adaptive_density(self.view.control()).map_err(to_py_err)?;
            Ok(PyEstimate::from_core(
                classic::hodges_lehmann_with_plugin(&self.view, &fit0).map_err(to_py_err)?,
            ))
        } else {
            Ok(PyEstimate::from_core(classic::hodges_lehmann(&self.view)))
        }
    }

    fn trimmed(&self, alpha: f64, beta: f64) -> PyResult<PyEstimate> {
        let spec = TrimSpec::new(alpha, beta).map_err(to_py_err)?;
        Ok(PyEstimate::from_core(
            trimmed::trimmed_tau(&self.view, &spec).map_err(to_py_err)?,
        ))
    }

    fn winsorized(&self, alpha: f64, beta: f64) -> PyResult<PyEstimate> {
        let spec = TrimSpec::new(alpha, beta).map_err(to_py_err)?;
        Ok(PyEstimate::from_core(
            trimmed::winsorized_tau(&self.view, &spec).map_err(to_py_err)?,
        ))
    }

    /// Adaptive trim selection. `mode` is `sym`, `asym`, or `right`;
    /// `kind` is `trim` or `wins`.
    #[pyo3(signature = (alpha0 = 0.0, alpha1 = 0.495, mode = "asym", kind = "trim"))]
    fn adaptive_trim(&self, alpha0: f64, alpha1: f64, mode: &str, kind: &str) -> PyResult<PyEstimate> {
        let mode = TrimMode::parse(mode).map_err(to_py_err)?;
        let kind = match kind {
            "trim" => AdaptKind::Trimmed,
            "wins" => AdaptKind::Winsorized,
            other => return Err(PyValueError::new_err(format!("unknown kind `{other}`"))),
        };
        Ok(PyEstimate::from_core(
            trimmed::adapt_trim(&self.view, alpha0, alpha1, mode, kind).map_err(to_py_err)?,
        ))
    }

    /// Influence-function estimator; `mode` is `root` or `onestep`.
    #[pyo3(signature = (mode = "root", split = false, seed = 0))]
    fn eif(&self, mode: &str, split: bool, seed: u64) -> PyResult<PyEstimate> {
        let mode = match mode {
            "root" => EifMode::Root,
            "onestep" => EifMode::OneStep,
            other => return Err(PyValueError::new_err(format!("unknown eif mode `{other}`"))),
        };
        Ok(PyEstimate::from_core(
            shift::eif_estimate(&self.view, split, mode, None, seed).map_err(to_py_err)?,
        ))
    }

    /// Weighted average-quantile estimator.
    #[pyo3(signature = (split = false, seed = 0))]
    fn waq(&self, split: bool, seed: u64) -> PyResult<PyEstimate> {
        Ok(PyEstimate::from_core(
            shift::waq_estimate(&self.view, split, seed).map_err(to_py_err)?,
        ))
    }

    /// Estimated L-estimator weights: (u, w, truncated) over the control
    /// grid, with w summing to one.
    fn waq_weights(&self) -> PyResult<(Vec<f64>, Vec<f64>, Vec<bool>)> {
        let fit0 = fit_adaptive_density(self.view.control()).map_err(to_py_err)?;
        let w = shift::waq_weights(&fit0, &self.view).map_err(to_py_err)?;
        Ok((w.u_grid, w.w, w.truncated))
    }

    /// Parametric pipeline: quantile-matching init at the median plus the
    /// one-step update. `model` is `additive` or `multiplicative`.
    #[pyo3(signature = (model = "additive", split = false, seed = 0))]
    fn theta(&self, model: &str, split: bool, seed: u64) -> PyResult<PyEstimate> {
        let model: &dyn TreatmentModel = match model {
            "additive" => &AdditiveModel,
            "multiplicative" => &MultiplicativeModel,
            other => return Err(PyValueError::new_err(format!("unknown model `{other}`"))),
        };
        Ok(PyEstimate::from_core(
            parametric::estimate_theta(&self.view, model, split, seed).map_err(to_py_err)?,
        ))
    }

    /// In-sample average treatment effect at a fitted theta.
    fn in_sample_ate(&self, model: &str, theta: f64) -> PyResult<f64> {
        let model: &dyn TreatmentModel = match model {
            "additive" => &AdditiveModel,
            "multiplicative" => &MultiplicativeModel,
            other => return Err(PyValueError::new_err(format!("unknown model `{other}`"))),
        };
        Ok(parametric::in_sample_ate(&self.view, model, &[theta]))
    }

    /// m-out-of-n bootstrap variance of a named point estimator
    /// (`means`, `medians`, `hl`, `eif`, `waq`).
    #[pyo3(signature = (estimator, m = 2000, b = 200, seed = 0))]
    fn bootstrap_variance(&self, estimator: &str, m: usize, b: usize, seed: u64) -> PyResult<f64> {
        let kind = tailshift::EstimatorKind::parse(estimator).map_err(to_py_err)?;
        let m = m.min(self.view.n());
        inference::m_of_n_bootstrap_var(
            &self.view,
            |resample| {
                Ok(match kind {
                    tailshift::EstimatorKind::Means => classic::diff_means(resample).tau_hat,
                    tailshift::EstimatorKind::Medians => classic::diff_medians_point(resample),
                    tailshift::EstimatorKind::HodgesLehmann => {
                        classic::hodges_lehmann(resample).tau_hat
                    }
                    tailshift::EstimatorKind::Eif => {
                        shift::eif_estimate(resample, false, EifMode::Root, None, seed)?.tau_hat
                    }
                    tailshift::EstimatorKind::Waq => {
                        shift::waq_estimate(resample, false, seed)?.tau_hat
                    }
                    _ => {
                        return Err(Error::BadConfig(format!(
                            "bootstrap_variance does not drive `{estimator}`"
                        )))
                    }
                })
            },
            m,
            b,
            seed,
        )
        .map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "TwoSample(n0={}, n1={}, p={:.4})",
            self.view.n0(),
            self.view.n1(),
            self.view.p()
        )
    }
}

/// Run a Monte Carlo scenario from TOML or JSON text; returns the CSV
/// report.
#[pyfunction]
fn simulate(config_text: &str) -> PyResult<String> {
    let spec = ScenarioSpec::parse(config_text).map_err(to_py_err)?;
    let report = run_scenario(&spec).map_err(to_py_err)?;
    Ok(report.to_csv())
}

/// Translate a log-scale shift into a level effect:
/// returns (tau, var).
#[pyfunction]
fn level_from_log(tau_log: f64, mu0: f64, mu1: f64, p: f64, v: f64) -> PyResult<(f64, f64)> {
    let l = parametric::level_from_log(tau_log, mu0, mu1, p, v).map_err(to_py_err)?;
    Ok((l.tau, l.var))
}

#[pymodule]
fn tailshift_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTwoSample>()?;
    m.add_class::<PyEstimate>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(level_from_log, m)?)?;
    Ok(())
}
