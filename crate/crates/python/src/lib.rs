//! Python bindings.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use twolayer_core::basis::{make_grid, BasisTable, SpectralCoeffs};
use twolayer_core::diagnostics::{self, DiagnosticsRecord};
use twolayer_core::harness::experiments::{linear_decay_check, DecaySetup};
use twolayer_core::harness::{self, RunConfig};
use twolayer_core::integrator::{self, StepControls, Trajectory};
use twolayer_core::{Error, GalerkinSystem, Model, PhysParams, RegEps, State};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Input(_) | Error::Config(_) | Error::Domain(_) | Error::TomlDe(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py_json<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn record_dict<'py>(py: Python<'py>, r: &DiagnosticsRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", r.t)?;
    d.set_item("mass_f", r.mass_f)?;
    d.set_item("mass_g", r.mass_g)?;
    d.set_item("E1", r.e1)?;
    d.set_item("E2eps", r.e2eps)?;
    d.set_item("E2", r.e2)?;
    d.set_item("D1", r.d1)?;
    d.set_item("D2", r.d2)?;
    d.set_item("min_f", r.min_f)?;
    d.set_item("min_g", r.min_g)?;
    d.set_item("dt_last", r.dt_last)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (k, x, length, deriv = 0))]
fn eval_basis(k: usize, x: f64, length: f64, deriv: usize) -> PyResult<f64> {
    twolayer_core::eval_basis(k, x, length, deriv).map_err(py_err)
}

#[pyfunction]
fn a_eps(s: f64, eps: f64) -> PyResult<f64> {
    Ok(twolayer_core::a_eps(s, RegEps::new(eps).map_err(py_err)?))
}

#[pyfunction]
fn phi(s: f64) -> PyResult<f64> {
    twolayer_core::phi(s).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (s, eps, deriv = 0))]
fn phi_eps(s: f64, eps: f64, deriv: u8) -> PyResult<f64> {
    twolayer_core::phi_eps(s, RegEps::new(eps).map_err(py_err)?, deriv).map_err(py_err)
}

type Integrated<'py> = (Vec<f64>, Vec<f64>, Vec<Bound<'py, PyDict>>);

/// Galerkin system with `n` cosine modes on `[0, L]`.
#[pyclass(name = "Galerkin", module = "twolayer")]
struct PyGalerkin {
    sys: GalerkinSystem,
}

impl PyGalerkin {
    fn state(&self, f: Vec<f64>, g: Vec<f64>, t: f64) -> PyResult<State> {
        let l = self.sys.phys().length();
        let n = self.sys.n();
        if f.len() != n + 1 || g.len() != n + 1 {
            return Err(PyValueError::new_err(format!("expected {} coefficients per layer", n + 1)));
        }
        let f = SpectralCoeffs::new(f, l).map_err(py_err)?;
        let g = SpectralCoeffs::new(g, l).map_err(py_err)?;
        State::new(f, g, t).map_err(py_err)
    }
}

#[pymethods]
impl PyGalerkin {
    #[new]
    #[pyo3(signature = (n, eps, a = 2.0, b = 1.0, length = 1.0, m = None, thin_film = false))]
    fn new(n: usize, eps: f64, a: f64, b: f64, length: f64, m: Option<usize>, thin_film: bool) -> PyResult<Self> {
        let phys = PhysParams::new(a, b, length).map_err(py_err)?;
        let eps = RegEps::new(eps).map_err(py_err)?;
        let grid = make_grid(m.unwrap_or(8 * (n + 1)), length).map_err(py_err)?;
        let table = BasisTable::new(n, grid).map_err(py_err)?;
        let model = if thin_film { Model::ThinFilm } else { Model::Coupled };
        let sys = GalerkinSystem::new(phys, eps, table).map_err(py_err)?.with_model(model);
        Ok(Self { sys })
    }

    #[getter]
    fn n(&self) -> usize {
        self.sys.n()
    }

    fn nodes(&self) -> Vec<f64> {
        self.sys.table().grid().nodes().to_vec()
    }

    #[pyo3(signature = (coeffs, deriv = 0))]
    fn synthesize(&self, coeffs: Vec<f64>, deriv: usize) -> PyResult<Vec<f64>> {
        if coeffs.len() != self.sys.n() + 1 {
            return Err(PyValueError::new_err("wrong number of coefficients"));
        }
        Ok(self.sys.table().synthesize(&coeffs, deriv))
    }

    fn analyze(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        if values.len() != self.sys.table().grid().len() {
            return Err(PyValueError::new_err("one value per quadrature node expected"));
        }
        Ok(self.sys.table().project(&values, 0))
    }

    /// Time derivatives `(dF, dG)` of the coefficients.
    fn rhs(&self, f: Vec<f64>, g: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        self.sys.rhs(&self.state(f, g, 0.0)?).map_err(py_err)
    }

    /// Jacobian of the packed vector field `[F..., G...]` as nested lists.
    fn jacobian(&self, f: Vec<f64>, g: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let j = self.sys.jacobian(&self.state(f, g, 0.0)?).map_err(py_err)?;
        Ok((0..j.nrows()).map(|r| j.row(r).iter().copied().collect()).collect())
    }

    /// All diagnostics of one state as a dict.
    fn diagnostics<'py>(&self, py: Python<'py>, f: Vec<f64>, g: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let s = self.state(f, g, 0.0)?;
        let r = diagnostics::record(&s, self.sys.phys(), self.sys.eps(), self.sys.table(), f64::NAN);
        record_dict(py, &r)
    }

    /// One step; returns `(f, g, err_est)`.
    #[pyo3(signature = (f, g, dt, scheme = "semi_implicit_spectral"))]
    fn step(&self, f: Vec<f64>, g: Vec<f64>, dt: f64, scheme: &str) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
        let controls = controls_for(scheme, None, None)?;
        let out = integrator::step(&self.sys, &self.state(f, g, 0.0)?, dt, &controls).map_err(py_err)?;
        Ok((out.next.f.into_vec(), out.next.g.into_vec(), out.err_est))
    }

    /// Integrate to `t_end`; returns `(f, g, records)` with one record per sample time.
    #[pyo3(signature = (f, g, t_end, sample_times, scheme = "semi_implicit_spectral", rel_tol = None, abs_tol = None))]
    #[allow(clippy::too_many_arguments)]
    fn integrate<'py>(
        &self,
        py: Python<'py>,
        f: Vec<f64>,
        g: Vec<f64>,
        t_end: f64,
        sample_times: Vec<f64>,
        scheme: &str,
        rel_tol: Option<f64>,
        abs_tol: Option<f64>,
    ) -> PyResult<Integrated<'py>> {
        let controls = controls_for(scheme, rel_tol, abs_tol)?;
        let init = self.state(f, g, 0.0)?;
        let mut traj = Trajectory::default();
        let end = py
            .detach(|| integrator::integrate(&self.sys, &init, t_end, &sample_times, &controls, &mut traj))
            .map_err(py_err)?;
        let records = traj.records.iter().map(|r| record_dict(py, r)).collect::<PyResult<_>>()?;
        Ok((end.f.into_vec(), end.g.into_vec(), records))
    }
}

fn controls_for(scheme: &str, rel_tol: Option<f64>, abs_tol: Option<f64>) -> PyResult<StepControls> {
    let scheme = serde_json::from_value(serde_json::Value::String(scheme.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown scheme '{scheme}'")))?;
    let mut c = StepControls { scheme, dt_max: f64::MAX, ..StepControls::default() };
    if let Some(r) = rel_tol {
        c.rel_tol = r;
    }
    if let Some(a) = abs_tol {
        c.abs_tol = a;
    }
    c.validate().map_err(py_err)?;
    Ok(c)
}

/// Run a TOML configuration. Writes artifacts when `out_dir` is given and
/// returns the summary as a dict, with the time series under `"records"`.
#[pyfunction]
#[pyo3(signature = (config_toml, overrides = Vec::new(), out_dir = None))]
fn run<'py>(
    py: Python<'py>,
    config_toml: &str,
    overrides: Vec<String>,
    out_dir: Option<std::path::PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = RunConfig::from_toml_with_overrides(config_toml, &overrides).map_err(py_err)?;
    let outcome = py
        .detach(|| match &out_dir {
            Some(dir) => harness::run(&cfg, dir),
            None => harness::simulate(&cfg),
        })
        .map_err(py_err)?;
    let summary = to_py_json(py, &outcome.summary())?;
    let records: Vec<_> = outcome.records.iter().map(|r| record_dict(py, r)).collect::<PyResult<_>>()?;
    summary.set_item("records", records)?;
    summary.set_item("f_final", outcome.final_state.f.as_slice().to_vec())?;
    summary.set_item("g_final", outcome.final_state.g.as_slice().to_vec())?;
    Ok(summary)
}

/// Decay rates of a small perturbation of a flat state against the linearization.
#[pyfunction]
#[pyo3(signature = (a = 2.0, b = 1.0, length = 1.0, eps = 0.1, j = 1, fbar = 1.0, gbar = 1.0, amp = 1e-3))]
#[allow(clippy::too_many_arguments)]
fn decay_check<'py>(
    py: Python<'py>,
    a: f64,
    b: f64,
    length: f64,
    eps: f64,
    j: usize,
    fbar: f64,
    gbar: f64,
    amp: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let phys = PhysParams::new(a, b, length).map_err(py_err)?;
    let eps = RegEps::new(eps).map_err(py_err)?;
    let setup = DecaySetup { j, fbar, gbar, amp, ..DecaySetup::default() };
    let report = py.detach(|| linear_decay_check(&phys, eps, &setup)).map_err(py_err)?;
    to_py_json(py, &report)
}

#[pymodule]
fn twolayer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(eval_basis, m)?)?;
    m.add_function(wrap_pyfunction!(a_eps, m)?)?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(phi_eps, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(decay_check, m)?)?;
    m.add_class::<PyGalerkin>()?;
    Ok(())
}
