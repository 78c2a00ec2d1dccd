//! Flat `key = value` experiment configuration.
//!
//! Values are stored in the units written in the file (ns, MHz, nW, ...), so
//! parsing and printing round-trip bit for bit. Typed model parameters are
//! derived on demand.

use super::occupancy::OccupancyModel;
use crate::bloch::{IntensityNoiseModel, NoiseDistribution, PowerAxis, SquarePulse};
use crate::constants::{units, AtomicConstants, DetectionChainParams, LandeFactors, MagneticField, ZeemanSublevel};
use crate::error::{Error, Result};
use crate::mcwf::{EmitterOptions, PulseTrainConfig, RepumpMode};
use crate::raman::{LambdaSystemParams, Polarization, RamanCalibration, RamanPulse, RamanSetup, SublevelPopulation};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub master_seed: u64,
    pub trajectories: u64,
    pub output_directory: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsSection {
    pub lifetime_ns: f64,
    pub hyperfine_splitting_ghz: f64,
    pub bohr_magneton_mhz_per_g: f64,
    pub lande_f1: f64,
    pub lande_f2: f64,
    pub field_g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub pulse_duration_ns: f64,
    /// Use the first fluorescence maximum as the "π" pulse.
    pub calibrate_first_maximum: bool,
    /// Pulse area in units of π when not calibrating.
    pub pulse_area_pi: f64,
    pub detuning_mhz: f64,
    pub period_ns: f64,
    pub excitation_window_us: f64,
    pub cooling_window_us: f64,
    pub cycles: u64,
    pub leak_probability: f64,
    pub repump: RepumpMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSection {
    pub total_efficiency: f64,
    pub splitter_ratio: f64,
    pub dark_rate_per_detector_hz: f64,
    pub background_rate_per_detector_hz: f64,
    pub bin_width_ns: f64,
    pub range_ns: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSection {
    pub relative_rms: f64,
    pub samples_per_point: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RabiSection {
    /// Average power of a nominal π pulse (nW).
    pub pi_power_nw: f64,
    pub max_power_nw: f64,
    pub points: u64,
    pub trace_step_ns: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HbtSection {
    /// Target average rate for the survival fit (s⁻¹); 0 disables the fit.
    pub target_average_rate_hz: f64,
    /// Trajectories whose raw emission times are exported.
    pub export_emission_trajectories: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamanSection {
    pub anchor_rabi_khz: f64,
    pub anchor_power_nw: f64,
    pub beam2_power_nw: f64,
    pub omega1_ghz: f64,
    pub single_photon_detuning_ghz: f64,
    pub two_photon_detuning_khz: f64,
    pub polarization: Polarization,
    pub damping_rate_per_s: f64,
    pub scan_pulse_us: f64,
    /// On-resonance area of the scan pulse in units of π; the beam-2 power
    /// is set to reach it. 0 keeps `beam2_power_nw`.
    pub scan_pulse_area_pi: f64,
    pub scan_start_mhz: f64,
    pub scan_stop_mhz: f64,
    pub scan_step_khz: f64,
    pub addressed_mf: i64,
    pub flop_max_us: f64,
    pub flop_points: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancySection {
    pub mean_occupancy: f64,
    pub capture_rate_hz: f64,
    pub survival_per_cycle: f64,
    pub steps: u64,
}

/// Complete run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub constants: ConstantsSection,
    pub train: TrainSection,
    pub chain: ChainSection,
    pub noise: NoiseSection,
    pub rabi: RabiSection,
    pub hbt: HbtSection,
    pub raman: RamanSection,
    pub occupancy: OccupancySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run: RunSection {
                master_seed: 20050101,
                trajectories: 10000,
                output_directory: "out".into(),
            },
            constants: ConstantsSection {
                lifetime_ns: 26.0,
                hyperfine_splitting_ghz: 6.8,
                bohr_magneton_mhz_per_g: 1.3996,
                lande_f1: -0.5,
                lande_f2: 0.5,
                field_g: 4.2,
            },
            train: TrainSection {
                pulse_duration_ns: 4.0,
                calibrate_first_maximum: true,
                pulse_area_pi: 1.0,
                detuning_mhz: 0.0,
                period_ns: 200.0,
                excitation_window_us: 115.0,
                cooling_window_us: 885.0,
                cycles: 100,
                leak_probability: 0.0,
                repump: RepumpMode::NextPulse,
            },
            chain: ChainSection {
                total_efficiency: 0.006,
                splitter_ratio: 0.5,
                dark_rate_per_detector_hz: 50.0,
                background_rate_per_detector_hz: 100.0,
                bin_width_ns: 1.0,
                range_ns: 1000.0,
            },
            noise: NoiseSection {
                relative_rms: 0.1,
                samples_per_point: 200,
            },
            rabi: RabiSection {
                pi_power_nw: 500.0,
                max_power_nw: 15000.0,
                points: 301,
                trace_step_ns: 0.25,
            },
            hbt: HbtSection {
                target_average_rate_hz: 9600.0,
                export_emission_trajectories: 1,
            },
            raman: RamanSection {
                anchor_rabi_khz: 65.0,
                anchor_power_nw: 60.0,
                beam2_power_nw: 60.0,
                omega1_ghz: 10.0,
                single_photon_detuning_ghz: 14140.0,
                two_photon_detuning_khz: 0.0,
                polarization: Polarization::PiSigmaMinus,
                damping_rate_per_s: 0.0,
                scan_pulse_us: 20.0,
                scan_pulse_area_pi: 1.0,
                scan_start_mhz: -12.0,
                scan_stop_mhz: 5.0,
                scan_step_khz: 2.0,
                addressed_mf: -1,
                flop_max_us: 60.0,
                flop_points: 601,
            },
            occupancy: OccupancySection {
                mean_occupancy: 0.5,
                capture_rate_hz: 3.0,
                survival_per_cycle: 1.0,
                steps: 1_000_000,
            },
        }
    }
}

/// A scalar that can appear on the right of `=`.
trait ConfigValue: Sized {
    fn render(&self) -> String;
    fn parse_value(s: &str) -> Option<Self>;
}

impl ConfigValue for f64 {
    fn render(&self) -> String {
        // shortest representation that parses back to the same bits
        format!("{self:?}")
    }
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl ConfigValue for u64 {
    fn render(&self) -> String {
        self.to_string()
    }
    fn parse_value(s: &str) -> Option<Self> {
        s.replace('_', "").parse().ok()
    }
}

impl ConfigValue for i64 {
    fn render(&self) -> String {
        self.to_string()
    }
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl ConfigValue for bool {
    fn render(&self) -> String {
        self.to_string()
    }
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl ConfigValue for String {
    fn render(&self) -> String {
        self.clone()
    }
    fn parse_value(s: &str) -> Option<Self> {
        (!s.is_empty()).then(|| s.to_string())
    }
}

impl ConfigValue for RepumpMode {
    fn render(&self) -> String {
        match self {
            RepumpMode::NextPulse => "next_pulse",
            RepumpMode::NextCooling => "next_cooling",
        }
        .into()
    }
    fn parse_value(s: &str) -> Option<Self> {
        match s {
            "next_pulse" => Some(RepumpMode::NextPulse),
            "next_cooling" => Some(RepumpMode::NextCooling),
            _ => None,
        }
    }
}

impl ConfigValue for Polarization {
    fn render(&self) -> String {
        self.label().into()
    }
    fn parse_value(s: &str) -> Option<Self> {
        Polarization::parse(s)
    }
}

macro_rules! config_keys {
    ($($key:literal => $section:ident . $field:ident),* $(,)?) => {
        impl ExperimentConfig {
            /// Every key, in canonical order.
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, ConfigValue::render(&self.$section.$field))),*]
            }

            fn assign(&mut self, key: &str, raw: &str) -> std::result::Result<(), String> {
                match key {
                    $($key => {
                        self.$section.$field = ConfigValue::parse_value(raw)
                            .ok_or_else(|| format!("cannot parse `{raw}`"))?;
                    })*
                    _ => return Err("unknown key".into()),
                }
                Ok(())
            }
        }
    };
}

config_keys! {
    "run.master_seed" => run.master_seed,
    "run.trajectories" => run.trajectories,
    "run.output_directory" => run.output_directory,
    "constants.lifetime_ns" => constants.lifetime_ns,
    "constants.hyperfine_splitting_ghz" => constants.hyperfine_splitting_ghz,
    "constants.bohr_magneton_mhz_per_g" => constants.bohr_magneton_mhz_per_g,
    "constants.lande_f1" => constants.lande_f1,
    "constants.lande_f2" => constants.lande_f2,
    "constants.field_g" => constants.field_g,
    "train.pulse_duration_ns" => train.pulse_duration_ns,
    "train.calibrate_first_maximum" => train.calibrate_first_maximum,
    "train.pulse_area_pi" => train.pulse_area_pi,
    "train.detuning_mhz" => train.detuning_mhz,
    "train.period_ns" => train.period_ns,
    "train.excitation_window_us" => train.excitation_window_us,
    "train.cooling_window_us" => train.cooling_window_us,
    "train.cycles" => train.cycles,
    "train.leak_probability" => train.leak_probability,
    "train.repump" => train.repump,
    "chain.total_efficiency" => chain.total_efficiency,
    "chain.splitter_ratio" => chain.splitter_ratio,
    "chain.dark_rate_per_detector_hz" => chain.dark_rate_per_detector_hz,
    "chain.background_rate_per_detector_hz" => chain.background_rate_per_detector_hz,
    "chain.bin_width_ns" => chain.bin_width_ns,
    "chain.range_ns" => chain.range_ns,
    "noise.relative_rms" => noise.relative_rms,
    "noise.samples_per_point" => noise.samples_per_point,
    "rabi.pi_power_nw" => rabi.pi_power_nw,
    "rabi.max_power_nw" => rabi.max_power_nw,
    "rabi.points" => rabi.points,
    "rabi.trace_step_ns" => rabi.trace_step_ns,
    "hbt.target_average_rate_hz" => hbt.target_average_rate_hz,
    "hbt.export_emission_trajectories" => hbt.export_emission_trajectories,
    "raman.anchor_rabi_khz" => raman.anchor_rabi_khz,
    "raman.anchor_power_nw" => raman.anchor_power_nw,
    "raman.beam2_power_nw" => raman.beam2_power_nw,
    "raman.omega1_ghz" => raman.omega1_ghz,
    "raman.single_photon_detuning_ghz" => raman.single_photon_detuning_ghz,
    "raman.two_photon_detuning_khz" => raman.two_photon_detuning_khz,
    "raman.polarization" => raman.polarization,
    "raman.damping_rate_per_s" => raman.damping_rate_per_s,
    "raman.scan_pulse_us" => raman.scan_pulse_us,
    "raman.scan_pulse_area_pi" => raman.scan_pulse_area_pi,
    "raman.scan_start_mhz" => raman.scan_start_mhz,
    "raman.scan_stop_mhz" => raman.scan_stop_mhz,
    "raman.scan_step_khz" => raman.scan_step_khz,
    "raman.addressed_mf" => raman.addressed_mf,
    "raman.flop_max_us" => raman.flop_max_us,
    "raman.flop_points" => raman.flop_points,
    "occupancy.mean_occupancy" => occupancy.mean_occupancy,
    "occupancy.capture_rate_hz" => occupancy.capture_rate_hz,
    "occupancy.survival_per_cycle" => occupancy.survival_per_cycle,
    "occupancy.steps" => occupancy.steps,
}

impl ExperimentConfig {
    /// Parses `key = value` lines over the defaults. Blank lines and `#`
    /// comments are ignored; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::config(key, format!("repeated on line {}", n + 1)));
            }
            cfg.assign(key, value).map_err(|m| Error::config(key, m))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical rendering of one key's value.
    pub fn get(&self, key: &str) -> Option<String> {
        self.entries().into_iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }

    /// Sets one key from its text form, as a config file line would.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.assign(key, value.trim()).map_err(|m| Error::config(key, m))
    }

    /// Canonical text: every key in order, one per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    /// SHA-256 of the canonical text, hex encoded. The output directory is
    /// left out since it does not affect any result.
    pub fn digest(&self) -> String {
        let text: String = self
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("run.output_directory "))
            .flat_map(|l| [l, "\n"])
            .collect();
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn output_directory(&self) -> PathBuf {
        PathBuf::from(&self.run.output_directory)
    }

    /// All invalid fields, or `Ok`.
    pub fn validate(&self) -> Result<()> {
        let mut issues: Vec<(String, String)> = Vec::new();
        let mut check = |ok: bool, field: &str, msg: &str| {
            if !ok {
                issues.push((field.to_string(), msg.to_string()));
            }
        };
        let c = &self.constants;
        check(c.lifetime_ns > 0.0, "constants.lifetime_ns", "must be > 0");
        check(c.hyperfine_splitting_ghz.is_finite(), "constants.hyperfine_splitting_ghz", "must be finite");
        check(c.bohr_magneton_mhz_per_g.is_finite(), "constants.bohr_magneton_mhz_per_g", "must be finite");
        check(c.lande_f1.is_finite(), "constants.lande_f1", "must be finite");
        check(c.lande_f2.is_finite(), "constants.lande_f2", "must be finite");
        check(c.field_g.is_finite() && c.field_g >= 0.0, "constants.field_g", "must be finite and >= 0");

        let t = &self.train;
        check(
            t.pulse_duration_ns > 0.0 && t.pulse_duration_ns.is_finite(),
            "train.pulse_duration_ns",
            "must be > 0",
        );
        check(t.pulse_area_pi >= 0.0 && t.pulse_area_pi.is_finite(), "train.pulse_area_pi", "must be >= 0");
        check(t.detuning_mhz.is_finite(), "train.detuning_mhz", "must be finite");
        check(
            t.period_ns.is_finite() && t.period_ns >= t.pulse_duration_ns,
            "train.period_ns",
            "must be >= the pulse duration",
        );
        let ratio = t.excitation_window_us * 1e3 / t.period_ns;
        check(
            ratio >= 1.0 && (ratio - ratio.round()).abs() <= 1e-9 * ratio,
            "train.excitation_window_us",
            "must hold an integer number of periods",
        );
        check(t.cooling_window_us >= 0.0, "train.cooling_window_us", "must be >= 0");
        check(t.cycles >= 1, "train.cycles", "must be >= 1");
        check((0.0..1.0).contains(&t.leak_probability), "train.leak_probability", "must lie in [0, 1)");

        let ch = &self.chain;
        check((0.0..=1.0).contains(&ch.total_efficiency), "chain.total_efficiency", "must lie in [0, 1]");
        check((0.0..=1.0).contains(&ch.splitter_ratio), "chain.splitter_ratio", "must lie in [0, 1]");
        check(ch.dark_rate_per_detector_hz >= 0.0, "chain.dark_rate_per_detector_hz", "must be >= 0");
        check(
            ch.background_rate_per_detector_hz >= 0.0,
            "chain.background_rate_per_detector_hz",
            "must be >= 0",
        );
        check(ch.bin_width_ns > 0.0, "chain.bin_width_ns", "must be > 0");
        let bins = ch.range_ns / ch.bin_width_ns;
        check(
            bins >= 1.0 && (bins - bins.round()).abs() <= 1e-9 * bins,
            "chain.range_ns",
            "must be a positive multiple of the bin width",
        );
        check(
            ch.range_ns >= 5.0 * t.period_ns,
            "chain.range_ns",
            "must span at least five pulse periods",
        );

        check(
            self.noise.relative_rms >= 0.0 && self.noise.relative_rms.is_finite(),
            "noise.relative_rms",
            "must be >= 0",
        );
        check(self.noise.samples_per_point >= 1, "noise.samples_per_point", "must be >= 1");

        let r = &self.rabi;
        check(r.pi_power_nw > 0.0, "rabi.pi_power_nw", "must be > 0");
        check(r.max_power_nw > 0.0, "rabi.max_power_nw", "must be > 0");
        check(r.points >= 3, "rabi.points", "must be >= 3");
        check(
            r.trace_step_ns > 0.0 && r.trace_step_ns <= t.period_ns,
            "rabi.trace_step_ns",
            "must lie in (0, period]",
        );

        check(self.hbt.target_average_rate_hz >= 0.0, "hbt.target_average_rate_hz", "must be >= 0");
        check(self.run.trajectories >= 1, "run.trajectories", "must be >= 1");

        let m = &self.raman;
        check(m.anchor_rabi_khz > 0.0, "raman.anchor_rabi_khz", "must be > 0");
        check(m.anchor_power_nw > 0.0, "raman.anchor_power_nw", "must be > 0");
        check(m.beam2_power_nw >= 0.0, "raman.beam2_power_nw", "must be >= 0");
        check(m.omega1_ghz > 0.0, "raman.omega1_ghz", "must be > 0");
        check(
            m.single_photon_detuning_ghz != 0.0 && m.single_photon_detuning_ghz.is_finite(),
            "raman.single_photon_detuning_ghz",
            "must be finite and non-zero",
        );
        check(m.two_photon_detuning_khz.is_finite(), "raman.two_photon_detuning_khz", "must be finite");
        check(m.damping_rate_per_s >= 0.0, "raman.damping_rate_per_s", "must be >= 0");
        check(m.scan_pulse_us > 0.0, "raman.scan_pulse_us", "must be > 0");
        check(m.scan_pulse_area_pi >= 0.0, "raman.scan_pulse_area_pi", "must be >= 0");
        check(m.scan_stop_mhz > m.scan_start_mhz, "raman.scan_stop_mhz", "must exceed raman.scan_start_mhz");
        check(m.scan_step_khz > 0.0, "raman.scan_step_khz", "must be > 0");
        check((-1..=1).contains(&m.addressed_mf), "raman.addressed_mf", "must be -1, 0 or 1");
        check(m.flop_max_us > 0.0, "raman.flop_max_us", "must be > 0");
        check(m.flop_points >= 5, "raman.flop_points", "must be >= 5");

        let o = &self.occupancy;
        check((0.0..=1.0).contains(&o.mean_occupancy), "occupancy.mean_occupancy", "must lie in [0, 1]");
        check(o.capture_rate_hz >= 0.0, "occupancy.capture_rate_hz", "must be >= 0");
        check(
            (0.0..=1.0).contains(&o.survival_per_cycle),
            "occupancy.survival_per_cycle",
            "must lie in [0, 1]",
        );
        check(o.steps >= 1, "occupancy.steps", "must be >= 1");

        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(issues))
        }
    }

    pub fn atomic_constants(&self) -> Result<AtomicConstants> {
        let mut c = AtomicConstants::from_lifetime(self.constants.lifetime_ns * units::NS)?;
        c.hyperfine_splitting = self.constants.hyperfine_splitting_ghz * units::GHZ;
        c.bohr_magneton_over_h = self.constants.bohr_magneton_mhz_per_g * units::MHZ;
        Ok(c)
    }

    pub fn lande(&self) -> LandeFactors {
        LandeFactors {
            f1: self.constants.lande_f1,
            f2: self.constants.lande_f2,
        }
    }

    pub fn field(&self) -> Result<MagneticField> {
        MagneticField::new(self.constants.field_g)
    }

    /// Pulse shape with zero Rabi frequency; callers fill in the drive.
    pub fn pulse_template(&self) -> Result<SquarePulse> {
        let p = SquarePulse {
            rabi_frequency: 0.0,
            duration: self.train.pulse_duration_ns * units::NS,
            detuning: units::angular(self.train.detuning_mhz * units::MHZ),
            start_time: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn period(&self) -> f64 {
        self.train.period_ns * units::NS
    }

    /// Train with the given drive Rabi frequency.
    pub fn pulse_train(&self, rabi_frequency: f64) -> Result<PulseTrainConfig> {
        let train = PulseTrainConfig {
            pulse: SquarePulse {
                rabi_frequency,
                ..self.pulse_template()?
            },
            period: self.period(),
            excitation_window: self.train.excitation_window_us * units::US,
            cooling_window: self.train.cooling_window_us * units::US,
            cycles: self.train.cycles as usize,
        };
        train.validate()?;
        Ok(train)
    }

    pub fn emitter_options(&self) -> EmitterOptions {
        EmitterOptions {
            leak_probability_per_pulse: self.train.leak_probability,
            repump: self.train.repump,
            occupied_cycles: None,
        }
    }

    pub fn chain(&self) -> Result<DetectionChainParams> {
        let c = DetectionChainParams {
            total_efficiency: self.chain.total_efficiency,
            splitter_ratio: self.chain.splitter_ratio,
            dark_rate_per_detector: self.chain.dark_rate_per_detector_hz,
            background_rate: self.chain.background_rate_per_detector_hz,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn bin_width(&self) -> f64 {
        self.chain.bin_width_ns * units::NS
    }

    pub fn histogram_range(&self) -> f64 {
        self.chain.range_ns * units::NS
    }

    pub fn noise(&self) -> IntensityNoiseModel {
        IntensityNoiseModel {
            relative_rms: self.noise.relative_rms,
            distribution: NoiseDistribution::GaussianTruncatedAtZero,
        }
    }

    /// Uniform average-power axis from 0 to `rabi.max_power_nw`.
    pub fn power_axis(&self) -> Result<PowerAxis> {
        let n = self.rabi.points as usize;
        let powers = (0..n)
            .map(|i| self.rabi.max_power_nw * units::NW * i as f64 / (n - 1) as f64)
            .collect();
        Ok(PowerAxis::calibrated(
            powers,
            self.rabi.pi_power_nw * units::NW,
            self.pulse_template()?.duration,
        ))
    }

    pub fn raman_calibration(&self) -> RamanCalibration {
        RamanCalibration {
            rabi_frequency: units::angular(self.raman.anchor_rabi_khz * units::KHZ),
            beam2_power: self.raman.anchor_power_nw * units::NW,
        }
    }

    /// Λ-system parameters at `raman.beam2_power_nw`.
    pub fn raman_params(&self) -> Result<LambdaSystemParams> {
        self.raman_params_at(self.raman.beam2_power_nw * units::NW)
    }

    pub fn raman_params_at(&self, beam2_power: f64) -> Result<LambdaSystemParams> {
        let p = LambdaSystemParams::calibrated(
            &self.raman_calibration(),
            beam2_power,
            units::angular(self.raman.omega1_ghz * units::GHZ),
            units::angular(self.raman.single_photon_detuning_ghz * units::GHZ),
        )?;
        Ok(p.with_two_photon_detuning(units::angular(self.raman.two_photon_detuning_khz * units::KHZ)))
    }

    /// Scan pulse and the Λ parameters it runs with. With a non-zero
    /// `raman.scan_pulse_area_pi` the beam-2 power is chosen so that the
    /// on-resonance pulse area is that many π.
    pub fn raman_scan_pulse(&self) -> Result<(RamanPulse, LambdaSystemParams)> {
        let pulse = RamanPulse::new(self.raman.scan_pulse_us * units::US)?;
        let params = if self.raman.scan_pulse_area_pi > 0.0 {
            let cal = self.raman_calibration();
            let want = self.raman.scan_pulse_area_pi * PI / pulse.duration;
            self.raman_params_at(cal.beam2_power * (want / cal.rabi_frequency).powi(2))?
        } else {
            self.raman_params()?
        };
        Ok((pulse, params))
    }

    pub fn raman_setup(&self) -> Result<RamanSetup> {
        let lande = self.lande();
        let mut pops = Vec::new();
        for mf in -1..=1 {
            pops.push((ZeemanSublevel::with_lande(1, mf, lande.f1)?, 1.0 / 3.0));
        }
        Ok(RamanSetup {
            initial: SublevelPopulation::new(pops)?,
            field: self.field()?,
            polarization: self.raman.polarization,
            constants: self.atomic_constants()?,
            lande,
            damping_rate: self.raman.damping_rate_per_s,
        })
    }

    pub fn addressed_sublevel(&self) -> Result<ZeemanSublevel> {
        ZeemanSublevel::with_lande(1, self.raman.addressed_mf as i8, self.constants.lande_f1)
    }

    pub fn occupancy_model(&self) -> OccupancyModel {
        OccupancyModel {
            mean_occupancy: self.occupancy.mean_occupancy,
            capture_rate: self.occupancy.capture_rate_hz,
            survival_per_cycle: self.occupancy.survival_per_cycle,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_round_trips_exactly() {
        let c = ExperimentConfig::default();
        let text = c.to_text();
        let back = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), text);
        assert_eq!(back.digest(), c.digest());
        assert_eq!(c.digest().len(), 64);
        assert_eq!(text.lines().count(), ExperimentConfig::KEYS.len());
    }

    #[test]
    fn default_is_valid_and_digest_tracks_changes() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let mut d = c.clone();
        d.train.period_ns = 201.0;
        assert_ne!(c.digest(), d.digest());
        let mut e = c.clone();
        e.run.output_directory = "elsewhere".into();
        assert_eq!(c.digest(), e.digest());
    }

    #[test]
    fn partial_file_overrides_defaults() {
        let c = ExperimentConfig::parse("# comment\n\ntrain.period_ns = 400\nraman.polarization = pi_sigma_plus\n").unwrap();
        assert_eq!(c.train.period_ns, 400.0);
        assert_eq!(c.raman.polarization, Polarization::PiSigmaPlus);
        assert_eq!(c.chain.total_efficiency, 0.006);
    }

    #[test]
    fn keyed_access() {
        let mut c = ExperimentConfig::default();
        assert_eq!(c.get("train.cycles").as_deref(), Some("100"));
        c.set("train.cycles", "50").unwrap();
        assert_eq!(c.train.cycles, 50);
        assert!(c.get("nope").is_none());
        assert!(matches!(c.set("train.cycles", "x"), Err(Error::Config { .. })));
    }

    #[test]
    fn parse_errors_name_the_field() {
        match ExperimentConfig::parse("train.period = 3") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "train.period"),
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::parse("train.cycles = -1") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "train.cycles"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(ExperimentConfig::parse("no equals sign"), Err(Error::Parse { line: 1, .. })));
        assert!(ExperimentConfig::parse("train.cycles = 1\ntrain.cycles = 2").is_err());
    }

    #[test]
    fn validation_enumerates_every_bad_field() {
        let mut c = ExperimentConfig::default();
        c.train.period_ns = 1.0;
        c.chain.total_efficiency = 2.0;
        c.occupancy.mean_occupancy = -0.1;
        let issues = c.validate().unwrap_err().issues();
        let fields: Vec<&str> = issues.iter().map(|(f, _)| f.as_str()).collect();
        for want in ["train.period_ns", "chain.total_efficiency", "occupancy.mean_occupancy"] {
            assert!(fields.contains(&want), "{fields:?}");
        }
    }

    #[test]
    fn derived_models_match_defaults() {
        let c = ExperimentConfig::default();
        let train = c.pulse_train(1.0).unwrap();
        assert_eq!(train.pulses_per_window(), 575);
        assert!((train.duty_cycle() - 0.115).abs() < 1e-12);
        let a = c.atomic_constants().unwrap();
        assert!((a.decay_rate - 1.0 / 26e-9).abs() < 1e-3);
        let (pulse, params) = c.raman_scan_pulse().unwrap();
        let area = crate::raman::effective_rabi_frequency(&params).unwrap() * pulse.duration;
        assert!((area - PI).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn float_fields_round_trip_bit_exactly(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let mut c = ExperimentConfig::default();
            c.train.period_ns = x;
            c.raman.scan_step_khz = -x;
            let back = ExperimentConfig::parse(&c.to_text()).unwrap();
            prop_assert_eq!(back.train.period_ns.to_bits(), x.to_bits());
            prop_assert_eq!(back.raman.scan_step_khz.to_bits(), (-x).to_bits());
            prop_assert_eq!(back.to_text(), c.to_text());
        }

        #[test]
        fn seeds_round_trip(seed in any::<u64>()) {
            let mut c = ExperimentConfig::default();
            c.run.master_seed = seed;
            prop_assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap().run.master_seed, seed);
        }
    }
}
