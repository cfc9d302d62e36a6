//! Python bindings: particle runs, the ensemble stepper, reference solvers
//! and the experiment drivers. Fields cross the boundary as lists of floats
//! sampled on the uniform grid `x_j = j / m`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use resetlab::config::{parse_config, parse_experiment, InitialData};
use resetlab::experiments::{run_experiment as run_exp, ExperimentId};
use resetlab::particle::{run_with, EnsembleState, Recording, RunConfig};
use resetlab::reference::{burgers_solve as solve, ColeHopf};
use resetlab::{NoiseDriver, PeriodicGrid, ScalarField};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn field(values: Vec<f64>) -> PyResult<ScalarField> {
    let grid = PeriodicGrid::new(values.len()).map_err(value_err)?;
    ScalarField::new(grid, values).map_err(value_err)
}

/// Sample a named preset such as `"sincos: a=1, b=0.5"` on `m` points.
#[pyfunction]
fn sample_initial(preset: &str, m: usize) -> PyResult<Vec<f64>> {
    let data: InitialData = preset.parse().map_err(value_err)?;
    let grid = PeriodicGrid::new(m).map_err(value_err)?;
    Ok(data.sample(grid).map_err(value_err)?.values().to_vec())
}

/// Deterministic viscous Burgers at `t_final`.
#[pyfunction]
#[pyo3(signature = (u0, nu, t_final, dt))]
fn burgers_solve(u0: Vec<f64>, nu: f64, t_final: f64, dt: f64) -> PyResult<Vec<f64>> {
    let tr = solve(&field(u0)?, nu, t_final, dt, &[]).map_err(value_err)?;
    Ok(tr.last().values().to_vec())
}

/// Cole-Hopf solution at time `t` on the grid of `u0` (mean-zero data).
#[pyfunction]
fn cole_hopf(u0: Vec<f64>, nu: f64, t: f64) -> PyResult<Vec<f64>> {
    let u0 = field(u0)?;
    let ch = ColeHopf::new(&u0, nu).map_err(value_err)?;
    Ok(ch.sample(t, u0.grid()).values().to_vec())
}

/// Validated run configuration, built from a TOML document.
#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (toml = ""))]
    fn new(toml: &str) -> PyResult<Self> {
        Ok(Self {
            inner: parse_config(toml).map_err(value_err)?.run,
        })
    }

    #[getter]
    fn n_copies(&self) -> usize {
        self.inner.n_copies
    }
    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }
    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }
    #[getter]
    fn nu(&self) -> f64 {
        self.inner.nu
    }
    #[getter]
    fn delta_t(&self) -> Option<f64> {
        self.inner.delta_t
    }
    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.t_final
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("config serializes")
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(n_copies={}, m={}, h={}, delta_t={:?}, t_final={}, seed={})",
            self.inner.n_copies, self.inner.m, self.inner.h, self.inner.delta_t, self.inner.t_final, self.inner.seed
        )
    }
}

/// Run the particle system. Returns a dict with `stop` (`"completed"` or
/// `"shock"`), `t_stop`, `epochs`, `final_u` and per-step `series` columns.
#[pyfunction]
#[pyo3(signature = (config, seed = None))]
fn run<'py>(py: Python<'py>, config: &PyRunConfig, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = config.inner.clone();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let rep = py
        .detach(|| run_with(&cfg, &cfg.driver(), Recording::EveryStep))
        .map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("stop", if rep.stop.is_shock() { "shock" } else { "completed" })?;
    out.set_item("t_stop", rep.stop.time())?;
    out.set_item("epochs", rep.epochs)?;
    out.set_item("final_u", rep.final_u.values().to_vec())?;
    let series = PyDict::new(py);
    series.set_item("t", rep.series.iter().map(|r| r.t).collect::<Vec<_>>())?;
    series.set_item("l2", rep.series.iter().map(|r| r.l2).collect::<Vec<_>>())?;
    series.set_item("mass", rep.series.iter().map(|r| r.mass).collect::<Vec<_>>())?;
    series.set_item("min_jac", rep.series.iter().map(|r| r.min_jac).collect::<Vec<_>>())?;
    series.set_item("h2", rep.series.iter().map(|r| r.h2).collect::<Vec<_>>())?;
    out.set_item("series", series)?;
    Ok(out)
}

/// Step-by-step access to the N-copy ensemble.
#[pyclass(name = "Ensemble")]
struct PyEnsemble {
    state: EnsembleState,
    driver: NoiseDriver,
}

#[pymethods]
impl PyEnsemble {
    #[new]
    #[pyo3(signature = (u0, n_copies, h, seed = 0, nu = 0.5, eps_jac = 1e-3, drift = true))]
    fn new(u0: Vec<f64>, n_copies: usize, h: f64, seed: u64, nu: f64, eps_jac: f64, drift: bool) -> PyResult<Self> {
        let cfg = RunConfig {
            n_copies,
            nu,
            m: u0.len(),
            h,
            delta_t: None,
            t_final: h,
            seed,
            eps_jac,
            drift,
            ..RunConfig::default()
        };
        cfg.validate().map_err(value_err)?;
        Ok(Self {
            state: EnsembleState::new(field(u0)?, n_copies, nu, h, eps_jac, drift),
            driver: cfg.driver(),
        })
    }

    /// Advance `steps` steps; raises on a shock.
    #[pyo3(signature = (steps = 1))]
    fn step(&mut self, steps: u64) -> PyResult<()> {
        for _ in 0..steps {
            self.state.step(&self.driver).map_err(value_err)?;
        }
        Ok(())
    }

    /// Make the current velocity the new anchor and restart the maps.
    fn reset(&mut self) {
        self.state.reset();
    }

    #[getter]
    fn t(&self) -> f64 {
        self.state.t()
    }
    #[getter]
    fn epoch(&self) -> u64 {
        self.state.epoch()
    }
    #[getter]
    fn u(&self) -> Vec<f64> {
        self.state.u().values().to_vec()
    }
    #[getter]
    fn min_jacobian(&self) -> f64 {
        self.state.min_jacobian()
    }
}

/// Run an experiment by id. Returns `(tables, summary_json)` where `tables`
/// maps table names to CSV text.
#[pyfunction]
#[pyo3(signature = (id, toml = "", seed = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    id: &str,
    toml: &str,
    seed: Option<u64>,
) -> PyResult<(Bound<'py, PyDict>, String)> {
    let id: ExperimentId = id.parse().map_err(value_err)?;
    let mut spec = parse_experiment(toml, id).map_err(value_err)?;
    if let Some(s) = seed {
        spec.base.seed = s;
    }
    let out = py.detach(|| run_exp(&spec)).map_err(value_err)?;
    let tables = PyDict::new(py);
    for t in &out.tables {
        tables.set_item(&t.name, t.to_csv().map_err(value_err)?)?;
    }
    Ok((tables, out.summary.to_string()))
}

#[pymodule]
fn pyresetlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(sample_initial, m)?)?;
    m.add_function(wrap_pyfunction!(burgers_solve, m)?)?;
    m.add_function(wrap_pyfunction!(cole_hopf, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyEnsemble>()?;
    Ok(())
}
