//! Python bindings: configuration, the experiment runs and the analytic
//! building blocks. Quantities are SI (seconds, rad/s) except in `Config`,
//! which uses the file's interface units.

use pyo3::exceptions::{PyKeyError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tweezer_core::bloch::{self, BlochState, SquarePulse};
use tweezer_core::constants::AtomicConstants;
use tweezer_core::experiment::{self as exp, ExperimentConfig, RamanMode, RunSummary, Uncertainty};
use tweezer_core::mcwf::{self, PulseTrainConfig};
use tweezer_core::raman::{self, LambdaSystemParams};
use tweezer_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn constants(lifetime: f64) -> PyResult<AtomicConstants> {
    AtomicConstants::from_lifetime(lifetime).map_err(py_err)
}

/// Experiment configuration, keyed like the `key = value` files.
#[pyclass(name = "Config", module = "tweezer", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    /// Defaults, optionally overridden by `key = value` text.
    #[new]
    #[pyo3(signature = (text=None))]
    fn new(text: Option<&str>) -> PyResult<Self> {
        let inner = match text {
            Some(t) => ExperimentConfig::parse(t).map_err(py_err)?,
            None => ExperimentConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_file(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: ExperimentConfig::from_file(&path).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn keys() -> Vec<&'static str> {
        ExperimentConfig::KEYS.to_vec()
    }

    fn __getitem__(&self, key: &str) -> PyResult<String> {
        self.inner.get(key).ok_or_else(|| PyKeyError::new_err(key.to_string()))
    }

    /// Accepts any value whose `str()` is valid in a config file.
    fn __setitem__(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let text = if let Ok(b) = value.extract::<bool>() {
            b.to_string()
        } else {
            value.str()?.to_string()
        };
        self.inner.set(key, &text).map_err(py_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Config(digest={})", &self.inner.digest()[..12])
    }
}

/// Headline metrics and artifact paths of a finished run.
#[pyclass(name = "Summary", module = "tweezer", frozen)]
struct PySummary {
    inner: RunSummary,
}

#[pymethods]
impl PySummary {
    #[getter]
    fn experiment_name(&self) -> &str {
        &self.inner.experiment_name
    }

    #[getter]
    fn parameters_digest(&self) -> &str {
        &self.inner.parameters_digest
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    #[getter]
    fn artifact_paths(&self) -> Vec<std::path::PathBuf> {
        self.inner.artifact_paths.clone()
    }

    /// `{label: (value, error, unit)}`; the error is 0 for exact values.
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for m in &self.inner.headline_metrics {
            d.set_item(&m.label, (m.value, m.error(), &m.unit))?;
        }
        Ok(d)
    }

    fn kind(&self, label: &str) -> PyResult<&'static str> {
        let m = self
            .inner
            .metric(label)
            .ok_or_else(|| PyKeyError::new_err(label.to_string()))?;
        Ok(match m.uncertainty {
            Uncertainty::Exact => "exact",
            Uncertainty::StdErr(_) => "stderr",
            Uncertainty::Resolution(_) => "resolution",
        })
    }

    fn __getitem__(&self, label: &str) -> PyResult<f64> {
        self.inner
            .metric(label)
            .map(|m| m.value)
            .ok_or_else(|| PyKeyError::new_err(label.to_string()))
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "Summary({}, {} metrics)",
            self.inner.experiment_name,
            self.inner.headline_metrics.len()
        )
    }
}

/// Runs an experiment with the GIL released.
fn launch(py: Python<'_>, config: &PyConfig, f: fn(&ExperimentConfig) -> tweezer_core::Result<RunSummary>) -> PyResult<PySummary> {
    let cfg = config.inner.clone();
    let inner = py.detach(move || f(&cfg)).map_err(py_err)?;
    Ok(PySummary { inner })
}

#[pyfunction]
fn run_rabi(py: Python<'_>, config: &PyConfig) -> PyResult<PySummary> {
    launch(py, config, exp::run_rabi_sweep)
}

#[pyfunction]
fn run_trace(py: Python<'_>, config: &PyConfig) -> PyResult<PySummary> {
    launch(py, config, exp::run_trace)
}

#[pyfunction]
fn run_hbt(py: Python<'_>, config: &PyConfig) -> PyResult<PySummary> {
    launch(py, config, exp::run_hbt)
}

#[pyfunction]
fn run_raman_scan(py: Python<'_>, config: &PyConfig) -> PyResult<PySummary> {
    launch(py, config, |c| exp::run_raman(c, RamanMode::Scan))
}

#[pyfunction]
fn run_raman_flop(py: Python<'_>, config: &PyConfig) -> PyResult<PySummary> {
    launch(py, config, |c| exp::run_raman(c, RamanMode::Flop))
}

#[pyfunction]
fn run_occupancy(py: Python<'_>, config: &PyConfig) -> PyResult<PySummary> {
    launch(py, config, exp::run_occupancy)
}

/// Lossless resonant excitation probability `sin²(ΩT/2)`.
#[pyfunction]
fn excitation_probability(rabi: f64, duration: f64) -> f64 {
    bloch::analytic_excitation_probability(rabi, duration)
}

/// `[(t, rho_ee)]` through a square pulse and `free_decay` seconds after it.
#[pyfunction]
#[pyo3(signature = (rabi, duration, lifetime=26e-9, free_decay=0.0, detuning=0.0))]
fn obe_trace(rabi: f64, duration: f64, lifetime: f64, free_decay: f64, detuning: f64) -> PyResult<Vec<(f64, f64)>> {
    let c = constants(lifetime)?;
    let pulse = SquarePulse::new(rabi, duration).map_err(py_err)?.with_detuning(detuning);
    let step = bloch::default_step(&pulse, &c);
    let out = bloch::evolve_obe(BlochState::ground(), &pulse, &c, step, free_decay).map_err(py_err)?;
    Ok(out.into_iter().map(|(t, s)| (t, s.rho_ee)).collect())
}

#[pyfunction]
#[pyo3(signature = (rabi, duration, period, lifetime=26e-9))]
fn mean_photons_per_period(rabi: f64, duration: f64, period: f64, lifetime: f64) -> PyResult<f64> {
    let pulse = SquarePulse::new(rabi, duration).map_err(py_err)?;
    bloch::mean_photons_per_period(&pulse, period, &constants(lifetime)?).map_err(py_err)
}

/// Rabi frequency (rad/s) maximising the photons per period.
#[pyfunction]
#[pyo3(signature = (duration, period, lifetime=26e-9))]
fn first_fluorescence_maximum(duration: f64, period: f64, lifetime: f64) -> PyResult<f64> {
    let template = SquarePulse::with_area(std::f64::consts::PI, duration).map_err(py_err)?;
    bloch::first_fluorescence_maximum(&template, period, &constants(lifetime)?).map_err(py_err)
}

/// Per-pulse photon-number statistics from quantum-jump trajectories, each
/// one window of `pulses` back-to-back periods.
#[pyfunction]
#[pyo3(signature = (rabi, duration, period, pulses, trajectories, seed=0, lifetime=26e-9))]
#[allow(clippy::too_many_arguments)]
fn photon_statistics<'py>(
    py: Python<'py>,
    rabi: f64,
    duration: f64,
    period: f64,
    pulses: usize,
    trajectories: u64,
    seed: u64,
    lifetime: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let c = constants(lifetime)?;
    let train = PulseTrainConfig::single_window(SquarePulse::new(rabi, duration).map_err(py_err)?, period, pulses);
    let s = py
        .detach(move || mcwf::photon_number_distribution(&train, &c, trajectories, seed))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("pulses", s.pulses)?;
    d.set_item("p0", (s.p0, s.p0_se))?;
    d.set_item("p1", (s.p1, s.p1_se))?;
    d.set_item("p2_or_more", (s.p2_or_more, s.p2_or_more_se))?;
    d.set_item("mean", (s.mean, s.mean_se))?;
    Ok(d)
}

/// Emission times of one trajectory over a single window.
#[pyfunction]
#[pyo3(signature = (rabi, duration, period, pulses, seed=0, index=0, lifetime=26e-9))]
fn emission_times(rabi: f64, duration: f64, period: f64, pulses: usize, seed: u64, index: u64, lifetime: f64) -> PyResult<Vec<f64>> {
    let train = PulseTrainConfig::single_window(SquarePulse::new(rabi, duration).map_err(py_err)?, period, pulses);
    let rec = mcwf::simulate_trajectory(&train, &constants(lifetime)?, tweezer_core::rng::TrajectorySeed::new(seed, index), 0.0)
        .map_err(py_err)?;
    Ok(rec.emission_times)
}

/// Two-photon Rabi frequency `Ω₁Ω₂/2Δ` (rad/s).
#[pyfunction]
fn effective_rabi_frequency(omega_1: f64, omega_2: f64, single_photon_detuning: f64) -> PyResult<f64> {
    raman::effective_rabi_frequency(&LambdaSystemParams {
        omega_1,
        omega_2,
        single_photon_detuning,
        two_photon_detuning: 0.0,
        beam2_power: 0.0,
    })
    .map_err(py_err)
}

/// Rabi formula for the transfer probability at two-photon detuning δ.
#[pyfunction]
fn transfer_probability(rabi: f64, detuning: f64, duration: f64) -> f64 {
    raman::transfer_probability(rabi, detuning, duration)
}

#[pymodule]
fn tweezer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PySummary>()?;
    m.add_function(wrap_pyfunction!(run_rabi, m)?)?;
    m.add_function(wrap_pyfunction!(run_trace, m)?)?;
    m.add_function(wrap_pyfunction!(run_hbt, m)?)?;
    m.add_function(wrap_pyfunction!(run_raman_scan, m)?)?;
    m.add_function(wrap_pyfunction!(run_raman_flop, m)?)?;
    m.add_function(wrap_pyfunction!(run_occupancy, m)?)?;
    m.add_function(wrap_pyfunction!(excitation_probability, m)?)?;
    m.add_function(wrap_pyfunction!(obe_trace, m)?)?;
    m.add_function(wrap_pyfunction!(mean_photons_per_period, m)?)?;
    m.add_function(wrap_pyfunction!(first_fluorescence_maximum, m)?)?;
    m.add_function(wrap_pyfunction!(photon_statistics, m)?)?;
    m.add_function(wrap_pyfunction!(emission_times, m)?)?;
    m.add_function(wrap_pyfunction!(effective_rabi_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(transfer_probability, m)?)?;
    Ok(())
}
