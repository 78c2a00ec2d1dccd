//! End-to-end experiment runs driven by an [`ExperimentConfig`].

mod config;
mod occupancy;
mod runs;

pub use config::{
    ChainSection, ConstantsSection, ExperimentConfig, HbtSection, NoiseSection, OccupancySection, RabiSection,
    RamanSection, RunSection, TrainSection,
};
pub use occupancy::{
    duty_limited_rate, fit_survival, mean_presence, occupied_cycles, simulate_occupancy, AtomNumber, OccupancyModel,
    OccupancyTrace,
};
pub use runs::{calibrated_rabi_frequency, run_hbt, run_occupancy, run_rabi_sweep, run_raman, run_trace, RamanMode};

use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Uncertainty {
    /// Deterministic model output.
    Exact,
    /// One standard error of a Monte Carlo estimate.
    StdErr(f64),
    /// Resolution limit of a grid-based fit.
    Resolution(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub label: String,
    pub value: f64,
    pub uncertainty: Uncertainty,
    pub unit: String,
}

impl Metric {
    pub fn new(label: impl Into<String>, value: f64, uncertainty: Uncertainty, unit: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            value,
            uncertainty,
            unit: unit.into(),
        }
    }

    /// Absolute error bar, zero when exact.
    pub fn error(&self) -> f64 {
        match self.uncertainty {
            Uncertainty::Exact => 0.0,
            Uncertainty::StdErr(e) | Uncertainty::Resolution(e) => e,
        }
    }
}

/// Outcome of one run: headline numbers and the files they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub experiment_name: String,
    pub parameters_digest: String,
    pub headline_metrics: Vec<Metric>,
    pub artifact_paths: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn metric(&self, label: &str) -> Option<&Metric> {
        self.headline_metrics.iter().find(|m| m.label == label)
    }

    /// Value of a metric that the run is known to emit.
    pub fn value(&self, label: &str) -> f64 {
        self.metric(label)
            .unwrap_or_else(|| panic!("run `{}` has no metric `{label}`", self.experiment_name))
            .value
    }

    pub fn to_text(&self) -> String {
        let mut s = crate::io::digest_line(&self.parameters_digest);
        let _ = writeln!(s, "experiment = {}", self.experiment_name);
        for m in &self.headline_metrics {
            let err = match m.uncertainty {
                Uncertainty::Exact => "exact".to_string(),
                Uncertainty::StdErr(e) => format!("± {e} (1 s.e.)"),
                Uncertainty::Resolution(e) => format!("± {e} (grid)"),
            };
            let _ = writeln!(s, "metric {} = {} {} {}", m.label, m.value, err, m.unit);
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning = {w}");
        }
        for p in &self.artifact_paths {
            let _ = writeln!(s, "artifact = {}", p.display());
        }
        s
    }
}
