//! The seeded end-to-end runs behind the CLI verbs.
//!
//! Each run validates the configuration, writes its CSV artifacts into the
//! output directory and returns a [`RunSummary`] whose metrics can all be
//! recomputed from those files.

use super::config::ExperimentConfig;
use super::occupancy::{duty_limited_rate, fit_survival, occupied_cycles, simulate_occupancy, AtomNumber};
use super::{Metric, RunSummary, Uncertainty};
use crate::bloch::{
    default_step, evolve_obe, first_fluorescence_maximum, mean_photons_per_period, rabi_curve, BlochState,
    RabiCurveRequest, SquarePulse,
};
use crate::constants::{units, AtomicConstants, DetectionChainParams};
use crate::detection::{
    add_spurious_counts, analyze_peaks, start_stop_histogram, thin_and_split, CoincidenceHistogram, GateSchedule,
};
use crate::error::{Error, Result};
use crate::io::{emission_csv, histogram_csv, table_csv};
use crate::mcwf::{
    ensemble_population, simulate_population_traces, simulate_trajectory_with, EmissionRecord, EmitterOptions,
    PhotonCounts, PulseTrainConfig,
};
use crate::raman::{find_peaks, fit_rabi_frequency, rabi_flopping_scan, spectroscopy_scan};
use crate::rng::{Stream, TrajectorySeed};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::path::PathBuf;

/// Side-peak coincidences below which HBT statistics are flagged.
const MIN_SIDE_PEAK_COINCIDENCES: f64 = 1e4;

struct Artifacts {
    dir: PathBuf,
    digest: String,
    paths: Vec<PathBuf>,
}

impl Artifacts {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let dir = cfg.output_directory();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            digest: cfg.digest(),
            paths: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)?;
        self.paths.push(path);
        Ok(())
    }

    fn table(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let text = table_csv(&self.digest, header, rows);
        self.write(name, &text)
    }

    fn finish(mut self, name: &str, metrics: Vec<Metric>, warnings: Vec<String>) -> Result<RunSummary> {
        let mut summary = RunSummary {
            experiment_name: name.to_string(),
            parameters_digest: self.digest.clone(),
            headline_metrics: metrics,
            artifact_paths: Vec::new(),
            warnings,
        };
        let path = self.dir.join(format!("{name}_summary.txt"));
        self.paths.push(path.clone());
        summary.artifact_paths = self.paths;
        std::fs::write(&path, summary.to_text())?;
        Ok(summary)
    }
}

fn row(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}

/// Uniform grid over `[0, period]` with `extra` times merged in.
fn time_grid(period: f64, step: f64, extra: &[f64]) -> Vec<f64> {
    let n = (period / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| (i as f64 * step).min(period)).collect();
    grid.extend(extra.iter().copied().filter(|&t| (0.0..=period).contains(&t)));
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-6 * step);
    grid
}

/// Linear interpolation of `ρ_ee` in a dense OBE sample list.
fn sample_rho_ee(samples: &[(f64, BlochState)], t: f64) -> f64 {
    let i = samples.partition_point(|(s, _)| *s < t);
    if i == 0 {
        return samples[0].1.rho_ee;
    }
    if i == samples.len() {
        return samples[samples.len() - 1].1.rho_ee;
    }
    let (t0, a) = (samples[i - 1].0, samples[i - 1].1.rho_ee);
    let (t1, b) = (samples[i].0, samples[i].1.rho_ee);
    if t1 - t0 <= 0.0 {
        return b;
    }
    a + (b - a) * (t - t0) / (t1 - t0)
}

fn mean_and_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    if n == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Drive Rabi frequency of the experiment's "π" pulse.
pub fn calibrated_rabi_frequency(cfg: &ExperimentConfig) -> Result<f64> {
    let template = cfg.pulse_template()?;
    if cfg.train.calibrate_first_maximum {
        first_fluorescence_maximum(&template, cfg.period(), &cfg.atomic_constants()?)
    } else {
        Ok(cfg.train.pulse_area_pi * PI / template.duration)
    }
}

const AREAS: [(&str, f64); 3] = [("pi", 1.0), ("2pi", 2.0), ("3pi", 3.0)];

/// Noise-averaged fluorescence against average power, plus the OBE traces
/// at one, two and three times the first-maximum Rabi frequency.
pub fn run_rabi_sweep(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let constants = cfg.atomic_constants()?;
    let template = cfg.pulse_template()?;
    let period = cfg.period();
    let mut art = Artifacts::new(cfg)?;

    let request = RabiCurveRequest {
        axis: cfg.power_axis()?,
        pulse_template: template,
        noise: cfg.noise(),
        period,
        detection_efficiency: cfg.chain.total_efficiency,
        samples_per_point: cfg.noise.samples_per_point as usize,
    };
    let curve = rabi_curve(&request, &constants, cfg.run.master_seed)?;
    art.table(
        "rabi_curve.csv",
        &["power_nw", "counts_per_s"],
        curve.iter().map(|p| row(&[p.average_power / units::NW, p.count_rate])),
    )?;

    let rabi = first_fluorescence_maximum(&template, period, &constants)?;
    let first = SquarePulse {
        rabi_frequency: rabi,
        ..template
    };
    let photons = mean_photons_per_period(&first, period, &constants)?;
    let grid = time_grid(period, cfg.rabi.trace_step_ns * units::NS, &[template.duration]);
    let mut efficiency = f64::NAN;
    for (label, factor) in AREAS {
        let pulse = SquarePulse {
            rabi_frequency: factor * rabi,
            ..template
        };
        let samples = evolve_obe(
            BlochState::ground(),
            &pulse,
            &constants,
            default_step(&pulse, &constants),
            period - pulse.duration,
        )?;
        if label == "pi" {
            efficiency = sample_rho_ee(&samples, template.duration);
        }
        art.table(
            &format!("rabi_trace_{label}.csv"),
            &["time_ns", "rho_ee"],
            grid.iter().map(|&t| row(&[t / units::NS, sample_rho_ee(&samples, t)])),
        )?;
    }
    art.table(
        "rabi_calibration.csv",
        &["pulse_area_pi", "rabi_frequency_mhz", "photons_per_period"],
        [row(&[rabi * template.duration / PI, units::cyclic(rabi) / units::MHZ, photons])],
    )?;

    let metrics = vec![
        Metric::new("first_peak_excitation_efficiency", efficiency, Uncertainty::Exact, ""),
        Metric::new(
            "first_peak_pulse_area_pi",
            rabi * template.duration / PI,
            Uncertainty::Exact,
            "pi",
        ),
        Metric::new(
            "first_peak_rabi_frequency_mhz",
            units::cyclic(rabi) / units::MHZ,
            Uncertainty::Exact,
            "MHz",
        ),
        Metric::new("first_peak_photons_per_period", photons, Uncertainty::Exact, ""),
    ];
    art.finish("rabi", metrics, Vec::new())
}

/// Quantum-jump ensemble traces of one period for the π, 2π and 3π drives,
/// alongside the master-equation solution.
pub fn run_trace(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let constants = cfg.atomic_constants()?;
    let template = cfg.pulse_template()?;
    let period = cfg.period();
    let rabi = calibrated_rabi_frequency(cfg)?;
    let n = cfg.run.trajectories;
    let grid = time_grid(period, cfg.rabi.trace_step_ns * units::NS, &[template.duration]);
    let end_index = grid
        .iter()
        .position(|&t| (t - template.duration).abs() < 1e-15)
        .expect("pulse end is on the grid");
    let mut art = Artifacts::new(cfg)?;
    let mut metrics = Vec::new();
    for (k, (label, factor)) in AREAS.into_iter().enumerate() {
        let pulse = SquarePulse {
            rabi_frequency: factor * rabi,
            ..template
        };
        // each drive gets its own block of trajectory indices
        let seed = cfg.run.master_seed.wrapping_add(k as u64 * 0x9e37_79b9);
        let traces = simulate_population_traces(&pulse, period, &constants, seed, n, &grid)?;
        let obe = evolve_obe(
            BlochState::ground(),
            &pulse,
            &constants,
            default_step(&pulse, &constants),
            period - pulse.duration,
        )?;
        let mut rows = Vec::with_capacity(grid.len());
        let mut max_dev: f64 = 0.0;
        for &t in &grid {
            let m = ensemble_population(&traces, t)?;
            let o = sample_rho_ee(&obe, t);
            max_dev = max_dev.max((m - o).abs());
            rows.push(row(&[t / units::NS, m, o]));
        }
        let (at_end, at_end_se) = mean_and_se(traces.iter().map(|tr| tr.excited[end_index]));
        art.table(
            &format!("trace_mcwf_{label}.csv"),
            &["time_ns", "rho_ee_mcwf", "rho_ee_obe"],
            rows,
        )?;
        metrics.push(Metric::new(
            format!("excited_at_pulse_end_{label}"),
            at_end,
            Uncertainty::StdErr(at_end_se),
            "",
        ));
        metrics.push(Metric::new(
            format!("max_deviation_from_obe_{label}"),
            max_dev,
            Uncertainty::StdErr(0.5 / (n as f64).sqrt()),
            "",
        ));
    }
    art.finish("trace", metrics, Vec::new())
}

/// One trajectory's contribution to the HBT run.
#[derive(Debug, Clone)]
struct TrajectoryRow {
    id: u64,
    occupied: usize,
    emitted: u64,
    counts: PhotonCounts,
    clicks_a: u64,
    clicks_b: u64,
    first_window: u64,
}

impl TrajectoryRow {
    fn cells(&self) -> Vec<String> {
        vec![
            self.id.to_string(),
            self.occupied.to_string(),
            self.emitted.to_string(),
            self.counts.zero.to_string(),
            self.counts.one.to_string(),
            self.counts.two_or_more.to_string(),
            self.clicks_a.to_string(),
            self.clicks_b.to_string(),
            self.first_window.to_string(),
        ]
    }
}

const TRAJECTORY_HEADER: [&str; 9] = [
    "trajectory_id",
    "occupied_cycles",
    "emitted_photons",
    "pulses_with_zero",
    "pulses_with_one",
    "pulses_with_two_or_more",
    "clicks_a",
    "clicks_b",
    "first_window_clicks",
];

struct HbtPipeline {
    train: PulseTrainConfig,
    constants: AtomicConstants,
    chain: DetectionChainParams,
    gates: GateSchedule,
    options: EmitterOptions,
    bin_width: f64,
    range: f64,
    master_seed: u64,
    export: u64,
}

type Batch = (Vec<TrajectoryRow>, CoincidenceHistogram, Vec<EmissionRecord>);

impl HbtPipeline {
    fn trajectory(&self, index: u64, survival: f64, histogram: bool) -> Result<Batch> {
        let seed = TrajectorySeed::new(self.master_seed, index);
        let mut rng = seed.rng(Stream::Occupancy);
        let occupied = occupied_cycles(survival, self.train.cycles, &mut rng);
        let options = EmitterOptions {
            occupied_cycles: Some(occupied),
            ..self.options
        };
        let record = simulate_trajectory_with(&self.train, &self.constants, seed, &options)?;
        let counts = PhotonCounts::from_record(&self.train, &record, occupied);
        let (a, b) = thin_and_split(&record, &self.chain, seed);
        let a = add_spurious_counts(&a, &self.chain, &self.gates, seed);
        let b = add_spurious_counts(&b, &self.chain, &self.gates, seed);
        let window_end = self.train.excitation_window;
        let first_window = a.timestamps.iter().chain(&b.timestamps).filter(|&&t| t < window_end).count() as u64;
        let mut h = CoincidenceHistogram::new(self.bin_width, self.range)?;
        if histogram {
            h = start_stop_histogram(&a, &b, self.bin_width, self.range)?;
        }
        let row = TrajectoryRow {
            id: index,
            occupied,
            emitted: record.emission_times.len() as u64,
            counts,
            clicks_a: a.len() as u64,
            clicks_b: b.len() as u64,
            first_window,
        };
        let export = if index < self.export { vec![record] } else { Vec::new() };
        Ok((vec![row], h, export))
    }

    fn run(&self, n: u64, survival: f64, histogram: bool) -> Result<Batch> {
        let empty = CoincidenceHistogram::new(self.bin_width, self.range)?;
        let merge = |mut acc: Batch, other: Batch| -> Result<Batch> {
            acc.0.extend(other.0);
            acc.1.merge(&other.1)?;
            acc.2.extend(other.2);
            Ok(acc)
        };
        let (mut rows, h, mut records) = (0..n)
            .into_par_iter()
            .map(|i| self.trajectory(i, survival, histogram))
            .try_fold(|| (Vec::new(), empty.clone(), Vec::new()), |acc, item| merge(acc, item?))
            .try_reduce(|| (Vec::new(), empty.clone(), Vec::new()), merge)?;
        rows.sort_by_key(|r| r.id);
        records.sort_by_key(|r| r.trajectory_id);
        Ok((rows, h, records))
    }
}

/// Flat accidental coincidence level per bin, from the click totals and the
/// calibrated detector dark and background rate (measured with the trap
/// empty). Each start pairs with uncorrelated stops from the other
/// detector's spurious counts, and each spurious start pairs with that
/// detector's signal clicks.
fn accidental_background(rows: &[TrajectoryRow], p: &HbtPipeline) -> f64 {
    let gate = p.gates.total_duration() * rows.len() as f64;
    if gate <= 0.0 {
        return 0.0;
    }
    let r = p.chain.spurious_rate();
    let spurious = r * gate;
    let clicks_a: u64 = rows.iter().map(|x| x.clicks_a).sum();
    let clicks_b: u64 = rows.iter().map(|x| x.clicks_b).sum();
    let signal_rate_a = (clicks_a as f64 - spurious).max(0.0) / gate;
    let signal_rate_b = (clicks_b as f64 - spurious).max(0.0) / gate;
    let positive = clicks_a as f64 * r + spurious * signal_rate_b;
    let negative = clicks_b as f64 * r + spurious * signal_rate_a;
    0.5 * (positive + negative) * p.bin_width
}

/// Rates derived from the per-trajectory click tallies.
struct Rates {
    peak: (f64, f64),
    average: (f64, f64),
}

fn rates(rows: &[TrajectoryRow], train: &PulseTrainConfig) -> Rates {
    let w = train.excitation_window;
    let cycles = train.cycles as f64;
    let (p, pe) = mean_and_se(rows.iter().map(|r| r.first_window as f64 / w));
    let (a, ae) = mean_and_se(rows.iter().map(|r| (r.clicks_a + r.clicks_b) as f64 / (w * cycles)));
    Rates {
        peak: (p, pe),
        average: (a, ae),
    }
}

/// Full emitter, detection and correlation pipeline with trap-loss gating.
///
/// The headline rates are the peak rate (first excitation window, atom
/// certainly present) and averages over all excitation windows. When
/// `hbt.target_average_rate_hz` is set, the per-cycle survival that maps
/// the measured peak onto that average is fitted (on the atom signal, the
/// spurious rate being survival independent) and a second pass at the
/// fitted survival reports the resulting measured average.
pub fn run_hbt(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let constants = cfg.atomic_constants()?;
    let rabi = calibrated_rabi_frequency(cfg)?;
    let train = cfg.pulse_train(rabi)?;
    let pipeline = HbtPipeline {
        train,
        constants,
        chain: cfg.chain()?,
        gates: GateSchedule::from_train(&train),
        options: cfg.emitter_options(),
        bin_width: cfg.bin_width(),
        range: cfg.histogram_range(),
        master_seed: cfg.run.master_seed,
        export: cfg.hbt.export_emission_trajectories,
    };
    let n = cfg.run.trajectories;
    let survival = cfg.occupancy.survival_per_cycle;
    let mut art = Artifacts::new(cfg)?;
    let mut metrics = Vec::new();
    let mut warnings = Vec::new();

    let (rows, hist, records) = pipeline.run(n, survival, true)?;
    art.write("hbt_histogram.csv", &histogram_csv(&art.digest.clone(), &hist))?;
    art.table("hbt_trajectories.csv", &TRAJECTORY_HEADER, rows.iter().map(TrajectoryRow::cells))?;
    if !records.is_empty() {
        art.write("hbt_emissions.csv", &emission_csv(&art.digest.clone(), &records))?;
    }
    let counts = rows.iter().fold(PhotonCounts::default(), |acc, r| acc.merge(&r.counts));
    let stats = counts.statistics();
    art.write("photon_number.json", &stats.to_json())?;

    let accidental = accidental_background(&rows, &pipeline);
    match analyze_peaks(&hist, train.period, constants.excited_lifetime, Some(accidental)) {
        Ok(pa) => {
            art.table(
                "hbt_peaks.csv",
                &["peak_delay_ns", "area"],
                pa.peak_positions.iter().zip(&pa.peak_areas).map(|(t, a)| row(&[t / units::NS, *a])),
            )?;
            let sufficient = pa.side_peak_coincidences >= MIN_SIDE_PEAK_COINCIDENCES;
            if !sufficient {
                warnings.push(format!(
                    "insufficient statistics: {:.0} side-peak coincidences (< {MIN_SIDE_PEAK_COINCIDENCES})",
                    pa.side_peak_coincidences
                ));
            }
            metrics.push(Metric::new(
                "zero_delay_residual_ratio",
                pa.zero_delay_residual_ratio,
                Uncertainty::StdErr(pa.residual_ratio_se),
                "",
            ));
            metrics.push(Metric::new(
                "peak_one_over_e_half_width_ns",
                pa.one_over_e_half_width / units::NS,
                Uncertainty::StdErr(pa.width_se / units::NS),
                "ns",
            ));
            metrics.push(Metric::new(
                "side_peak_coincidences",
                pa.side_peak_coincidences,
                Uncertainty::StdErr(pa.side_peak_coincidences.max(0.0).sqrt()),
                "",
            ));
            metrics.push(Metric::new(
                "accidental_background_per_bin",
                pa.background_per_bin,
                Uncertainty::Exact,
                "counts",
            ));
            metrics.push(Metric::new(
                "statistics_sufficient",
                if sufficient { 1.0 } else { 0.0 },
                Uncertainty::Exact,
                "",
            ));
        }
        Err(e) => warnings.push(format!("peak analysis failed: {e}")),
    }

    let r = rates(&rows, &train);
    let duty = train.duty_cycle();
    metrics.push(Metric::new("peak_count_rate", r.peak.0, Uncertainty::StdErr(r.peak.1), "1/s"));
    metrics.push(Metric::new(
        "average_count_rate_during_excitation",
        r.average.0,
        Uncertainty::StdErr(r.average.1),
        "1/s",
    ));
    metrics.push(Metric::new(
        "duty_limited_average_rate",
        duty_limited_rate(r.average.0, train.excitation_window, train.cycle_duration()),
        Uncertainty::StdErr(r.average.1 * duty),
        "1/s",
    ));
    let capture = cfg.occupancy.capture_rate_hz;
    if capture > 0.0 {
        // wall clock including the wait for the next atom after the sequence
        let f = train.excitation_window * train.cycles as f64 / (train.total_duration() + 1.0 / capture);
        metrics.push(Metric::new(
            "average_rate_including_reload",
            r.average.0 * f,
            Uncertainty::StdErr(r.average.1 * f),
            "1/s",
        ));
    }
    metrics.push(Metric::new("p_two_or_more_per_pulse", stats.p2_or_more, Uncertainty::StdErr(stats.p2_or_more_se), ""));
    metrics.push(Metric::new("mean_photons_per_pulse", stats.mean, Uncertainty::StdErr(stats.mean_se), ""));
    metrics.push(Metric::new("survival_per_cycle", survival, Uncertainty::Exact, ""));

    let target = cfg.hbt.target_average_rate_hz;
    if target > 0.0 {
        // dark and background counts do not depend on the atom being there
        let spurious = 2.0 * pipeline.chain.spurious_rate();
        let fit = |peak: f64| fit_survival(peak - spurious, target - spurious, train.cycles);
        match fit(r.peak.0) {
            Ok(s_fit) => {
                let lo = fit(r.peak.0 + r.peak.1).unwrap_or(s_fit);
                let hi = fit((r.peak.0 - r.peak.1).max(target)).unwrap_or(s_fit);
                let (fit_rows, _, _) = pipeline.run(n, s_fit, false)?;
                art.table(
                    "hbt_trajectories_fitted.csv",
                    &TRAJECTORY_HEADER,
                    fit_rows.iter().map(TrajectoryRow::cells),
                )?;
                let fr = rates(&fit_rows, &train);
                metrics.push(Metric::new(
                    "fitted_survival_per_cycle",
                    s_fit,
                    Uncertainty::StdErr(0.5 * (hi - lo).abs()),
                    "",
                ));
                metrics.push(Metric::new(
                    "fitted_average_count_rate_during_excitation",
                    fr.average.0,
                    Uncertainty::StdErr(fr.average.1),
                    "1/s",
                ));
                metrics.push(Metric::new(
                    "fitted_duty_limited_average_rate",
                    fr.average.0 * duty,
                    Uncertainty::StdErr(fr.average.1 * duty),
                    "1/s",
                ));
            }
            Err(e) => warnings.push(format!("survival fit failed: {e}")),
        }
    }
    art.finish("hbt", metrics, warnings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RamanMode {
    Scan,
    Flop,
}

/// Raman spectroscopy scan or Rabi-flopping measurement.
pub fn run_raman(cfg: &ExperimentConfig, mode: RamanMode) -> Result<RunSummary> {
    cfg.validate()?;
    let setup = cfg.raman_setup()?;
    let mut art = Artifacts::new(cfg)?;
    let mut metrics = Vec::new();
    let mut warnings = Vec::new();
    match mode {
        RamanMode::Scan => {
            let (pulse, params) = cfg.raman_scan_pulse()?;
            warnings.extend(params.adiabatic_warning());
            let start = cfg.raman.scan_start_mhz * units::MHZ;
            let stop = cfg.raman.scan_stop_mhz * units::MHZ;
            let step = cfg.raman.scan_step_khz * units::KHZ;
            let resonances = setup.resonances()?;
            if !resonances.iter().any(|r| (start..=stop).contains(&r.2)) {
                let at: Vec<String> = resonances.iter().map(|r| format!("{:.3}", r.2 / units::MHZ)).collect();
                return Err(Error::config(
                    "raman.scan_start_mhz",
                    format!(
                        "scan [{}, {}] MHz contains none of the resonances at {} MHz",
                        cfg.raman.scan_start_mhz,
                        cfg.raman.scan_stop_mhz,
                        at.join(", ")
                    ),
                ));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            let grid: Vec<f64> = (0..=n).map(|k| start + k as f64 * step).collect();
            let scan = spectroscopy_scan(&setup, &pulse, &params, &grid)?;
            art.table(
                "raman_scan.csv",
                &["detuning_mhz", "population"],
                scan.iter().map(|&(f, p)| row(&[f / units::MHZ, p])),
            )?;
            for (k, peak) in find_peaks(&scan, 0.5).iter().enumerate() {
                metrics.push(Metric::new(
                    format!("peak_{k}_center_mhz"),
                    peak.center / units::MHZ,
                    Uncertainty::Resolution(step / units::MHZ),
                    "MHz",
                ));
                metrics.push(Metric::new(
                    format!("peak_{k}_fwhm_khz"),
                    peak.fwhm / units::KHZ,
                    Uncertainty::Resolution(step / units::KHZ),
                    "kHz",
                ));
                metrics.push(Metric::new(format!("peak_{k}_height"), peak.height, Uncertainty::Exact, ""));
            }
            art.finish("raman-scan", metrics, warnings)
        }
        RamanMode::Flop => {
            let params = cfg.raman_params()?;
            warnings.extend(params.adiabatic_warning());
            let addressed = cfg.addressed_sublevel()?;
            let points = cfg.raman.flop_points as usize;
            let durations: Vec<f64> = (0..points)
                .map(|k| cfg.raman.flop_max_us * units::US * k as f64 / (points - 1) as f64)
                .collect();
            let data = rabi_flopping_scan(&setup, &params, &addressed, &durations)?;
            art.table(
                "raman_flop.csv",
                &["duration_us", "population"],
                data.iter().map(|&(t, p)| row(&[t / units::US, p])),
            )?;
            let omega = fit_rabi_frequency(&data)?;
            metrics.push(Metric::new(
                "rabi_frequency_khz",
                units::cyclic(omega) / units::KHZ,
                Uncertainty::Exact,
                "kHz",
            ));
            let peak = data.iter().map(|p| p.1).fold(0.0, f64::max);
            metrics.push(Metric::new("max_f2_population", peak, Uncertainty::Exact, ""));
            art.finish("raman-flop", metrics, warnings)
        }
    }
}

/// Long occupancy record of the blockaded trap, one step per sequence cycle.
pub fn run_occupancy(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let model = cfg.occupancy_model();
    let step = (cfg.train.excitation_window_us + cfg.train.cooling_window_us) * units::US;
    let steps = cfg.occupancy.steps;
    let trace = simulate_occupancy(
        &model,
        step,
        steps,
        AtomNumber::Zero,
        TrajectorySeed::new(cfg.run.master_seed, 0),
    )?;
    // hard invariant: the blockade never holds two atoms
    assert!(trace.max_atom_number() <= 1, "occupancy trace reached two atoms");
    let mut art = Artifacts::new(cfg)?;
    let last = trace.transitions.last().map(|t| t.1).unwrap_or(AtomNumber::Zero);
    let end = steps as f64 * step;
    art.table(
        "occupancy.csv",
        &["time_ms", "atom_number"],
        trace
            .transitions
            .iter()
            .chain(std::iter::once(&(end, last)))
            .map(|(t, a)| vec![(t * 1e3).to_string(), a.count().to_string()]),
    )?;
    let fraction = trace.fraction_occupied();
    let se = model.occupancy_standard_error(step, steps);
    let mut warnings = Vec::new();
    if (fraction - model.mean_occupancy).abs() > 3.0 * se {
        warnings.push(format!(
            "simulated occupancy {fraction:.4} differs from the configured mean {} by more than 3 s.e.",
            model.mean_occupancy
        ));
    }
    let metrics = vec![
        Metric::new("fraction_occupied", fraction, Uncertainty::StdErr(se), ""),
        Metric::new("configured_mean_occupancy", model.mean_occupancy, Uncertainty::Exact, ""),
        Metric::new("stationary_occupancy", model.stationary_occupancy(step), Uncertainty::Exact, ""),
        Metric::new("max_atom_number", f64::from(trace.max_atom_number()), Uncertainty::Exact, ""),
        Metric::new("transitions", (trace.transitions.len() - 1) as f64, Uncertainty::Exact, ""),
    ];
    art.finish("occupancy", metrics, warnings)
}
