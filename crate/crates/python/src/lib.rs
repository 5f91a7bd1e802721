//! Python bindings. Reports cross the boundary as plain dicts and lists.

use std::path::PathBuf;

use ksmv::analysis::NormCurve;
use ksmv::config::RunConfig;
use ksmv::constants;
use ksmv::grid::GridField;
use ksmv::kernels;
use ksmv::particles::{self, ParticleRun};
use ksmv::pde::{self, PdeRun};
use ksmv::special;
use ksmv::Error;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Config { .. } | Error::Domain { .. } | Error::Inadmissible(_) | Error::Precondition(_) => {
            PyValueError::new_err(e.to_string())
        }
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let list = PyList::empty(py);
            for x in a {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(m) => {
            let d = PyDict::new(py);
            for (k, x) in m {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn report<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &v)
}

/// Row-major `(points, points)` nested list.
fn field_rows(f: &GridField) -> Vec<Vec<f64>> {
    f.values().chunks(f.grid().points()).map(|r| r.to_vec()).collect()
}

fn curve_dict<'py>(py: Python<'py>, c: &NormCurve) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("quantity", c.quantity.label())?;
    d.set_item("exponent", c.exponent)?;
    d.set_item("times", c.times())?;
    d.set_item("values", c.samples.iter().map(|s| s.1).collect::<Vec<f64>>())?;
    d.set_item("bound", c.bound)?;
    Ok(d)
}

/// A parsed run configuration.
#[pyclass(name = "Config", module = "ksmv_py")]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        RunConfig::parse(text).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        RunConfig::load(&path).map(|inner| Self { inner }).map_err(err)
    }

    /// Canonical text that parses back to the same configuration.
    fn echo(&self) -> String {
        self.inner.echo()
    }

    #[getter]
    fn chi(&self) -> PyResult<f64> {
        self.inner.resolved_chi().map_err(err)
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_n_particles(&mut self, n: usize) {
        self.inner.n_particles = n;
    }

    #[getter]
    fn n_particles(&self) -> usize {
        self.inner.n_particles
    }

    fn admissibility<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let c = &self.inner;
        let r = constants::check_admissibility(
            &c.params().map_err(err)?,
            &c.initial_data().map_err(err)?,
            c.norm_exponent,
            c.uniqueness_c0,
        )
        .map_err(err)?;
        report(py, &r)
    }

    fn run_pde(&self, py: Python<'_>) -> PyResult<PdeResult> {
        let config = self.inner.pde_config().map_err(err)?;
        let run = py.detach(|| pde::run(&config)).map_err(err)?;
        Ok(PdeResult { run })
    }

    fn run_particles(&self, py: Python<'_>) -> PyResult<ParticleResult> {
        let config = self.inner.sim_config().map_err(err)?;
        let run = py.detach(|| particles::run(&config)).map_err(err)?;
        Ok(ParticleResult { run })
    }

    fn picard<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let config = self.inner.sim_config().map_err(err)?;
        let k = self.inner.picard_iterations;
        let r = py.detach(|| particles::picard_iterate(&config, k)).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("distances", r.distances)?;
        d.set_item("masses", r.masses)?;
        Ok(d)
    }

    fn compare<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let config = self.inner.compare_config().map_err(err)?;
        let r = py.detach(|| ksmv::compare::compare(&config)).map_err(err)?;
        report(py, &r)
    }

    fn __repr__(&self) -> String {
        format!("Config(chi={:?}, horizon={}, seed={})", self.inner.chi, self.inner.horizon, self.inner.seed)
    }
}

#[pyclass(module = "ksmv_py")]
struct PdeResult {
    run: PdeRun,
}

#[pymethods]
impl PdeResult {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.run.states.iter().map(|s| s.t).collect()
    }

    #[getter]
    fn len(&self) -> usize {
        self.run.states.len()
    }

    /// Density at save index `i` as nested rows.
    fn density(&self, i: usize) -> PyResult<Vec<Vec<f64>>> {
        let s = self.run.states.get(i).ok_or_else(|| PyValueError::new_err("save index out of range"))?;
        Ok(field_rows(&s.rho))
    }

    fn mass(&self, i: usize) -> PyResult<f64> {
        let s = self.run.states.get(i).ok_or_else(|| PyValueError::new_err("save index out of range"))?;
        Ok(s.rho.mass())
    }

    fn curves<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.run.rho_curves.iter().chain(&self.run.drift_curves).map(|c| curve_dict(py, c)).collect()
    }

    fn outcome<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        report(py, &self.run.outcome)
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.run.warnings.clone()
    }
}

#[pyclass(module = "ksmv_py")]
struct ParticleResult {
    run: ParticleRun,
}

#[pymethods]
impl ParticleResult {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.run.history.time_grid.clone()
    }

    #[getter]
    fn save_steps(&self) -> Vec<usize> {
        self.run.save_steps.clone()
    }

    #[getter]
    fn bandwidth(&self) -> f64 {
        self.run.bandwidth
    }

    /// `(xs, ys)` at time step `n`.
    fn positions(&self, n: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let h = &self.run.history;
        if n >= h.slices() {
            return Err(PyValueError::new_err("time step out of range"));
        }
        Ok((h.xs[n].clone(), h.ys[n].clone()))
    }

    /// Density estimate at save index `i` as nested rows.
    fn density(&self, i: usize) -> PyResult<Vec<Vec<f64>>> {
        let d = self.run.densities.get(i).ok_or_else(|| PyValueError::new_err("save index out of range"))?;
        Ok(field_rows(d))
    }

    fn curves<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.run.curves.iter().map(|c| curve_dict(py, c)).collect()
    }

    fn digest(&self) -> u64 {
        self.run.history.digest()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.run.warnings.clone()
    }
}

#[pyfunction]
fn gamma(x: f64) -> PyResult<f64> {
    special::gamma(x).map_err(err)
}

#[pyfunction]
fn beta(a: f64, b: f64) -> PyResult<f64> {
    special::beta_singular(a, b).map_err(err)
}

#[pyfunction]
fn c1(q: f64) -> PyResult<f64> {
    special::c1(q).map_err(err)
}

#[pyfunction]
fn c2(q: f64) -> PyResult<f64> {
    special::c2(q).map_err(err)
}

#[pyfunction]
fn heat_kernel(t: f64, x: f64, y: f64) -> PyResult<f64> {
    kernels::heat_kernel(t, [x, y]).map_err(err)
}

#[pyfunction]
fn reg_kernel(eps: f64, t: f64, x: f64, y: f64) -> PyResult<(f64, f64)> {
    kernels::reg_kernel(eps, t, [x, y]).map(|v| (v[0], v[1])).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (q = 3.0))]
fn thm_constants<'py>(py: Python<'py>, q: f64) -> PyResult<Bound<'py, PyAny>> {
    report(py, &constants::thm_constants(q).map_err(err)?)
}

/// Proof-convention threshold for the standard Gaussian data with `c0` of weight `c0_weight`.
#[pyfunction]
#[pyo3(signature = (c0_weight = 1.0, q = 3.0))]
fn chi_max(c0_weight: f64, q: f64) -> PyResult<f64> {
    constants::chi_max(&kernels::InitialData::standard(c0_weight), q).map_err(err)
}

#[pymodule]
pub fn ksmv_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PdeResult>()?;
    m.add_class::<ParticleResult>()?;
    m.add_function(wrap_pyfunction!(gamma, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(c1, m)?)?;
    m.add_function(wrap_pyfunction!(c2, m)?)?;
    m.add_function(wrap_pyfunction!(heat_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(reg_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(thm_constants, m)?)?;
    m.add_function(wrap_pyfunction!(chi_max, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
