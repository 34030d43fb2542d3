//! Python bindings: loss panels, forecast records, scores, identification
//! values, compositional helpers, backtests and the rolling harness.
//!
//! Structured results (test outcomes, reports, truth series) come back as
//! plain dicts.

use esc_core::harness::{assemble_report, rolling_run, simulate as simulate_truth, RunConfig};
use esc_core::models::hs::hs_forecast as hs_forecast_core;
use esc_core::murphy::{murphy_curve_esc, murphy_curve_tuple, murphy_curve_var};
use esc_core::scoring::{pinball, score_tuple as score_tuple_core};
use esc_core::{composition, identification, stattests, EscError as CoreError};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(esc_py, EscError, PyValueError, "Error raised by the ES contribution library.");

fn to_py(err: CoreError) -> PyErr {
    // keep the whole source chain in the message
    let mut msg = err.to_string();
    let mut source = std::error::Error::source(&err);
    while let Some(s) = source {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        source = s.source();
    }
    EscError::new_err(msg)
}

trait IntoPyResult<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for esc_core::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Serializable value to a Python object through JSON.
fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| EscError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Losses of `d` assets over consecutive time stamps.
#[pyclass(name = "LossPanel", module = "esc_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyLossPanel {
    inner: esc_core::LossPanel,
}

#[pymethods]
impl PyLossPanel {
    /// Panel from rows of losses; times default to 1..=len and names to
    /// X1..Xd.
    #[new]
    #[pyo3(signature = (rows, times=None, names=None))]
    fn new(rows: Vec<Vec<f64>>, times: Option<Vec<i64>>, names: Option<Vec<String>>) -> PyResult<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let times = times.unwrap_or_else(|| (1..=rows.len() as i64).collect());
        let names = names.unwrap_or_else(|| (1..=d).map(|j| format!("X{j}")).collect());
        let inner = esc_core::LossPanel::new(times, names, &rows).py_err()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: esc_core::LossPanel::read_csv_path(path).py_err()?,
        })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_csv_path(path).py_err()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn times(&self) -> Vec<i64> {
        self.inner.times().to_vec()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    /// Aggregate loss `S_t` of every row.
    fn aggregate(&self) -> Vec<f64> {
        self.inner.aggregate()
    }

    /// Rows `start..end` as a new panel.
    fn slice(&self, start: usize, end: usize) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.slice(start..end).py_err()?,
        })
    }

    fn __repr__(&self) -> String {
        format!("LossPanel(len={}, dim={})", self.inner.len(), self.inner.dim())
    }
}

/// One-step-ahead forecast of `(ESC_1, ..., ESC_d, VaR, ES)`.
#[pyclass(name = "ForecastRecord", module = "esc_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyForecastRecord {
    inner: esc_core::ForecastRecord,
}

#[pymethods]
impl PyForecastRecord {
    #[new]
    fn new(esc: Vec<f64>, var: f64, es: f64, alpha: f64) -> PyResult<Self> {
        Ok(Self {
            inner: esc_core::ForecastRecord::new(esc, var, es, alpha).py_err()?,
        })
    }

    #[getter]
    fn esc(&self) -> Vec<f64> {
        self.inner.esc.clone()
    }

    #[getter]
    fn var(&self) -> f64 {
        self.inner.var
    }

    #[getter]
    fn es(&self) -> f64 {
        self.inner.es
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    /// `|sum(esc) - es|`.
    fn allocation_gap(&self) -> f64 {
        self.inner.allocation_gap()
    }

    fn __repr__(&self) -> String {
        format!(
            "ForecastRecord(esc={:?}, var={}, es={}, alpha={})",
            self.inner.esc, self.inner.var, self.inner.es, self.inner.alpha
        )
    }
}

fn records(forecasts: &[PyForecastRecord]) -> Vec<esc_core::ForecastRecord> {
    forecasts.iter().map(|f| f.inner.clone()).collect()
}

/// Score pair `(VaR score, ESC score)` of a forecast against one loss row,
/// with the pinball loss and the square loss.
#[pyfunction]
fn score_tuple(forecast: &PyForecastRecord, x: Vec<f64>) -> PyResult<(f64, f64)> {
    let p = score_tuple_core(&forecast.inner, &x).py_err()?;
    Ok((p.var_score, p.esc_score))
}

/// Pinball loss of a VaR forecast.
#[pyfunction]
fn score_var(v: f64, s: f64, alpha: f64) -> f64 {
    pinball(v, s, alpha)
}

/// Mean score pairs of forecasts over a panel, one per row.
#[pyfunction]
fn average_scores(forecasts: Vec<PyForecastRecord>, panel: &PyLossPanel) -> PyResult<(f64, f64)> {
    let p = esc_core::scoring::average_scores(&records(&forecasts), &panel.inner).py_err()?;
    Ok((p.var_score, p.esc_score))
}

#[pyfunction]
fn ident_var(v: f64, s: f64, alpha: f64) -> f64 {
    identification::ident_var(v, s, alpha)
}

#[pyfunction]
fn ident_es(v: f64, e: f64, s: f64, alpha: f64) -> f64 {
    identification::ident_es(v, e, s, alpha)
}

#[pyfunction]
fn ident_esc(m: f64, v: f64, x_j: f64, s: f64) -> f64 {
    identification::ident_esc(m, v, x_j, s)
}

/// Normalizes a positive vector onto the simplex.
#[pyfunction]
fn closing(x: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(composition::closing(&x).py_err()?.as_slice().to_vec())
}

#[pyfunction]
fn ilr(w: Vec<f64>) -> PyResult<Vec<f64>> {
    let w = esc_core::SimplexWeights::new(w).py_err()?;
    composition::ilr(&w).py_err()
}

#[pyfunction]
fn ilr_inv(z: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(composition::ilr_inv(&z).py_err()?.as_slice().to_vec())
}

/// Long-run variance `(variance, bandwidth)` with the Bartlett kernel.
#[pyfunction]
fn hac_lrv(series: Vec<f64>) -> PyResult<(f64, f64)> {
    let est = stattests::hac_lrv(&series).py_err()?;
    Ok((est.variance, est.bandwidth))
}

/// Diebold–Mariano test on score differences (model minus benchmark).
#[pyfunction]
#[pyo3(signature = (score_diff, level=0.05))]
fn dm_test<'py>(py: Python<'py>, score_diff: Vec<f64>, level: f64) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &stattests::dm_test(&score_diff, level).py_err()?)
}

/// Calibration test on identification values.
#[pyfunction]
#[pyo3(signature = (ident_values, level=0.05))]
fn calibration_test<'py>(py: Python<'py>, ident_values: Vec<f64>, level: f64) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &stattests::calibration_test(&ident_values, level).py_err()?)
}

/// Historical-simulation forecast from an estimation window.
#[pyfunction]
fn hs_forecast(window: &PyLossPanel, alpha: f64) -> PyResult<PyForecastRecord> {
    Ok(PyForecastRecord {
        inner: hs_forecast_core(&window.inner, alpha).py_err()?,
    })
}

/// Murphy curve of `target` ("VaR", "ESC" or a component index) as a dict
/// with knots, values and left limits.
#[pyfunction]
#[pyo3(signature = (forecasts, panel, target=None, label="model"))]
fn murphy_curve<'py>(
    py: Python<'py>,
    forecasts: Vec<PyForecastRecord>,
    panel: &PyLossPanel,
    target: Option<&Bound<'py, PyAny>>,
    label: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let f = records(&forecasts);
    let curve = if let Some(j) = target.and_then(|t| t.extract::<usize>().ok()) {
        murphy_curve_esc(&f, &panel.inner, j, label)
    } else {
        let name = target.map_or(Ok("VaR".to_string()), |t| t.extract::<String>())?;
        match name.as_str() {
            "VaR" => murphy_curve_var(&f, &panel.inner, label),
            "ESC" => murphy_curve_tuple(&f, &panel.inner, label),
            other => {
                return Err(EscError::new_err(format!(
                    "unknown target `{other}`; use \"VaR\", \"ESC\" or a component index"
                )))
            }
        }
    }
    .py_err()?;
    let out = PyDict::new(py);
    out.set_item("label", &curve.label)?;
    out.set_item("target", &curve.target)?;
    out.set_item("knots", &curve.knots)?;
    out.set_item("values", &curve.values)?;
    out.set_item("left_values", &curve.left_values)?;
    Ok(out.into_any())
}

fn parse_config(config_json: &str) -> PyResult<RunConfig> {
    let cfg = RunConfig::from_json_str(config_json).py_err()?;
    cfg.validate().py_err()?;
    Ok(cfg)
}

/// Simulates the panel of a JSON run configuration with a `simulation`
/// section. Returns the panel and a dict of its analytic truth.
#[pyfunction]
fn simulate<'py>(py: Python<'py>, config_json: &str) -> PyResult<(PyLossPanel, Bound<'py, PyDict>)> {
    let cfg = parse_config(config_json)?;
    let truth = simulate_truth(&cfg).py_err()?;
    let d = PyDict::new(py);
    d.set_item("var", &truth.true_var)?;
    d.set_item("es", &truth.true_es)?;
    d.set_item("esc", &truth.true_esc)?;
    d.set_item("alpha", truth.alpha)?;
    Ok((PyLossPanel { inner: truth.panel }, d))
}

/// Runs the rolling forecasts of a JSON run configuration and returns the
/// backtest report as a dict. Without a panel, the panel is simulated from
/// the configuration and the TRUTH model is available.
#[pyfunction]
#[pyo3(signature = (config_json, panel=None))]
fn backtest<'py>(py: Python<'py>, config_json: &str, panel: Option<&PyLossPanel>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(config_json)?;
    // the harness is CPU-bound; let other Python threads run meanwhile
    let report = py
        .detach(|| -> esc_core::Result<_> {
            match panel {
                Some(p) => {
                    let run = rolling_run(&cfg, &p.inner, None)?;
                    assemble_report(&run, &p.inner, &cfg)
                }
                None => {
                    let truth = simulate_truth(&cfg)?;
                    let run = rolling_run(&cfg, &truth.panel, Some(&truth))?;
                    assemble_report(&run, &truth.panel, &cfg)
                }
            }
        })
        .py_err()?;
    json_to_py(py, &report)
}

#[pymodule]
fn esc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EscError", m.py().get_type::<EscError>())?;
    m.add_class::<PyLossPanel>()?;
    m.add_class::<PyForecastRecord>()?;
    m.add_function(wrap_pyfunction!(score_tuple, m)?)?;
    m.add_function(wrap_pyfunction!(score_var, m)?)?;
    m.add_function(wrap_pyfunction!(average_scores, m)?)?;
    m.add_function(wrap_pyfunction!(ident_var, m)?)?;
    m.add_function(wrap_pyfunction!(ident_es, m)?)?;
    m.add_function(wrap_pyfunction!(ident_esc, m)?)?;
    m.add_function(wrap_pyfunction!(closing, m)?)?;
    m.add_function(wrap_pyfunction!(ilr, m)?)?;
    m.add_function(wrap_pyfunction!(ilr_inv, m)?)?;
    m.add_function(wrap_pyfunction!(hac_lrv, m)?)?;
    m.add_function(wrap_pyfunction!(dm_test, m)?)?;
    m.add_function(wrap_pyfunction!(calibration_test, m)?)?;
    m.add_function(wrap_pyfunction!(hs_forecast, m)?)?;
    m.add_function(wrap_pyfunction!(murphy_curve, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(backtest, m)?)?;
    Ok(())
}
