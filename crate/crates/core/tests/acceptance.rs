//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Runs without the libtest harness so the lines
//! are always shown.

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use tweezer_core::bloch::{
    default_step, final_state, first_fluorescence_maximum, mean_photons_per_period, BlochState, SquarePulse,
};
use tweezer_core::constants::{units, AtomicConstants};
use tweezer_core::experiment::{run_hbt, run_occupancy, run_raman, ExperimentConfig, RamanMode, RunSummary};
use tweezer_core::mcwf::{photon_counts, EmitterOptions, PhotonCounts, PulseTrainConfig};

type Outcome = std::result::Result<(bool, String), Box<dyn std::error::Error>>;

const PERIOD: f64 = 200e-9;
const DURATION: f64 = 4e-9;

fn config_in(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.run.output_directory = dir.to_string_lossy().into_owned();
    cfg
}

fn first_max_pulse(constants: &AtomicConstants) -> tweezer_core::Result<SquarePulse> {
    let template = SquarePulse::new(PI / DURATION, DURATION)?;
    let rabi = first_fluorescence_maximum(&template, PERIOD, constants)?;
    SquarePulse::new(rabi, DURATION)
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn c1_analytic_rabi() -> Outcome {
    let constants = AtomicConstants::without_decay();
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let area = 6.0 * PI * k as f64 / 999.0;
        let pulse = SquarePulse::with_area(area, DURATION)?;
        let s = final_state(BlochState::ground(), &pulse, &constants, default_step(&pulse, &constants))?;
        worst = worst.max((s.rho_ee - (area / 2.0).sin().powi(2)).abs());
    }
    Ok((worst < 1e-6, format!("max |rho_ee - sin^2(theta/2)| = {worst:.2e} (limit 1e-6)")))
}

fn c2_pi_efficiency() -> Outcome {
    let constants = AtomicConstants::default();
    let pulse = first_max_pulse(&constants)?;
    let s = final_state(BlochState::ground(), &pulse, &constants, default_step(&pulse, &constants))?;
    Ok((
        (s.rho_ee - 0.95).abs() <= 0.02,
        format!("rho_ee(T) = {:.5} at area {:.4} pi (want 0.95 +- 0.02)", s.rho_ee, pulse.area() / PI),
    ))
}

fn c3_mcwf_vs_obe() -> Outcome {
    let constants = AtomicConstants::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, seed) in [(1u32, 301u64), (2, 302), (3, 303)] {
        let pulse = SquarePulse::with_area(f64::from(k) * PI, DURATION)?;
        let oracle = mean_photons_per_period(&pulse, PERIOD, &constants)?;
        let train = PulseTrainConfig::single_window(pulse, PERIOD, 1);
        let stats = photon_counts(&train, &constants, seed, 0..10_000, &EmitterOptions::default())?.statistics();
        let z = (stats.mean - oracle) / stats.mean_se;
        ok &= z.abs() < 3.0;
        parts.push(format!("{k}pi: {:.4}+-{:.4} vs {oracle:.4} ({z:+.2} se)", stats.mean, stats.mean_se));
    }
    Ok((ok, parts.join("; ")))
}

fn c4_two_photon_probability() -> Outcome {
    let constants = AtomicConstants::default();
    let train = PulseTrainConfig::single_window(first_max_pulse(&constants)?, PERIOD, 1000);
    let stats = photon_counts(&train, &constants, 404, 0..100, &EmitterOptions::default())?.statistics();
    Ok((
        stats.pulses >= 100_000 && (stats.p2_or_more - 0.018).abs() <= 0.010,
        format!(
            "P(>=2) = {:.5} +- {:.5} over {} pulses (want 0.018 +- 0.010)",
            stats.p2_or_more, stats.p2_or_more_se, stats.pulses
        ),
    ))
}

/// Side-peak centres from the exported histogram: centroid of the counts
/// above background within a quarter period of each nominal position.
fn side_peak_offsets(histogram_csv: &Path, background: f64) -> std::io::Result<Vec<(i64, f64)>> {
    let text = std::fs::read_to_string(histogram_csv)?;
    let rows: Vec<(f64, f64)> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("delay_ns"))
        .filter_map(|l| {
            let (a, b) = l.split_once(',')?;
            Some((a.parse().ok()?, b.parse().ok()?))
        })
        .collect();
    let width = rows[1].0 - rows[0].0;
    let period_ns = PERIOD / units::NS;
    let mut out = Vec::new();
    for k in [-4i64, -3, -2, -1, 1, 2, 3, 4] {
        let nominal = k as f64 * period_ns;
        let (mut w, mut wt) = (0.0, 0.0);
        for &(edge, n) in &rows {
            let t = edge + 0.5 * width;
            if (t - nominal).abs() < 0.25 * period_ns {
                w += n - background;
                wt += (n - background) * t;
            }
        }
        out.push((k, wt / w - nominal));
    }
    Ok(out)
}

fn c5_hbt(hbt: &RunSummary, dir: &Path) -> Outcome {
    let ratio = hbt.value("zero_delay_residual_ratio");
    let width = hbt.value("peak_one_over_e_half_width_ns");
    let side = hbt.value("side_peak_coincidences");
    let offsets = side_peak_offsets(&dir.join("hbt_histogram.csv"), hbt.value("accidental_background_per_bin"))?;
    let worst = offsets.iter().map(|o| o.1.abs()).fold(0.0, f64::max);
    let ok = side >= 1e4 && worst <= 2.0 && within(ratio, 0.02, 0.05) && (width - 27.0).abs() <= 3.0;
    Ok((
        ok,
        format!(
            "{side:.0} side coincidences; peaks within {worst:.2} ns of k*200 ns; ratio {ratio:.4} +- {:.4} (want [0.02, 0.05]); width {width:.2} +- {:.2} ns (want 27 +- 3)",
            hbt.metric("zero_delay_residual_ratio").unwrap().error(),
            hbt.metric("peak_one_over_e_half_width_ns").unwrap().error(),
        ),
    ))
}

fn c6_count_rates(hbt: &RunSummary, cfg: &ExperimentConfig) -> Outcome {
    let peak = hbt.metric("peak_count_rate").unwrap();
    let avg = hbt.metric("average_count_rate_during_excitation").unwrap();
    let duty = hbt.value("duty_limited_average_rate");
    let fraction = cfg.train.excitation_window_us / (cfg.train.excitation_window_us + cfg.train.cooling_window_us);
    let peak_ok = (peak.value - 29_000.0).abs() <= 2_900.0;
    // with survival 1 the average equals the peak in expectation
    let sigma = peak.error().hypot(avg.error());
    let duty_ok = (duty - avg.value * fraction).abs() <= 1e-9 * duty
        && avg.value <= peak.value + 3.0 * sigma
        && cfg.occupancy.survival_per_cycle == 1.0;
    let s = hbt.value("fitted_survival_per_cycle");
    let fitted = hbt.metric("fitted_average_count_rate_during_excitation").unwrap();
    let target = cfg.hbt.target_average_rate_hz;
    let fit_ok = s > 0.0 && s < 1.0 && (fitted.value - target).abs() <= 3.0 * fitted.error();
    Ok((
        peak_ok && duty_ok && fit_ok,
        format!(
            "peak {:.0} +- {:.0} 1/s (want 29000 +- 10%); duty-limited {duty:.0} = {fraction} x average {:.0} <= {fraction} x peak; fitted survival {s:.5} gives {:.0} +- {:.0} 1/s (target {target})",
            peak.value,
            peak.error(),
            avg.value,
            fitted.value,
            fitted.error()
        ),
    ))
}

fn scan_centres_and_width(dir: &Path, pulse_us: f64) -> tweezer_core::Result<(Vec<f64>, Vec<f64>, f64)> {
    let mut cfg = config_in(dir);
    cfg.raman.scan_pulse_us = pulse_us;
    let s = run_raman(&cfg, RamanMode::Scan)?;
    let centres: Vec<f64> = s
        .headline_metrics
        .iter()
        .filter(|m| m.label.ends_with("_center_mhz"))
        .map(|m| m.value)
        .collect();
    let widths: Vec<f64> = s
        .headline_metrics
        .iter()
        .filter(|m| m.label.ends_with("_fwhm_khz"))
        .map(|m| m.value)
        .collect();
    Ok((centres, widths, cfg.raman.scan_step_khz * units::KHZ / units::MHZ))
}

fn c7_raman_scan(dir: &Path) -> Outcome {
    let (centres, widths, step) = scan_centres_and_width(dir, 20.0)?;
    let (_, widths_long, _) = scan_centres_and_width(dir, 40.0)?;
    // offsets (g2·mF2 − g1·mF1)·μB·B for mF = −1 → −1 and mF = 0 → −1
    let zeeman = 1.3996 * 4.2;
    let mut ok = true;
    let mut parts = Vec::new();
    for (quoted, oracle) in [(-8.82, -1.5 * zeeman), (-2.94, -0.5 * zeeman)] {
        let found = centres.iter().copied().min_by(|a, b| (a - oracle).abs().total_cmp(&(b - oracle).abs()));
        let Some(c) = found else {
            return Ok((false, format!("no peak near {quoted} MHz")));
        };
        // agrees with the analytic offset to one grid step and with the
        // quoted value at its two-decimal precision
        ok &= (c - oracle).abs() <= step && (c - quoted).abs() < 0.005;
        parts.push(format!("{c:.4} MHz (offset {oracle:.4}, quoted {quoted})"));
    }
    let ratios: Vec<f64> = widths.iter().zip(&widths_long).map(|(a, b)| b / a).collect();
    ok &= !ratios.is_empty() && ratios.iter().all(|r| (r - 0.5).abs() <= 0.025);
    Ok((ok, format!("centres {}; width ratio T->2T {ratios:.4?} (want 0.5 +- 5%)", parts.join(", "))))
}

fn flop_frequency(dir: &Path, beam2_power_nw: f64) -> tweezer_core::Result<f64> {
    let mut cfg = config_in(dir);
    cfg.raman.beam2_power_nw = beam2_power_nw;
    Ok(run_raman(&cfg, RamanMode::Flop)?.value("rabi_frequency_khz"))
}

fn c8_raman_flop(dir: &Path) -> Outcome {
    let anchor = ExperimentConfig::default().raman.anchor_power_nw;
    let f1 = flop_frequency(dir, anchor)?;
    let f4 = flop_frequency(dir, 4.0 * anchor)?;
    let ok = (f1 - 65.0).abs() <= 0.05 * 65.0 && (f4 / f1 - 2.0).abs() < 1e-6;
    Ok((ok, format!("{f1:.4} kHz at {anchor} nW (want 65 +- 5%); 4x power ratio {:.8}", f4 / f1)))
}

fn csv_files(dir: &Path) -> std::io::Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv" || e == "json") {
            files.push((path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path)?));
        }
    }
    files.sort();
    Ok(files)
}

fn c9_determinism(dir: &Path) -> Outcome {
    let mut outputs = Vec::new();
    for threads in [1usize, 4] {
        let out = dir.join(format!("threads_{threads}"));
        let mut cfg = config_in(&out);
        cfg.run.trajectories = 200;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        pool.install(|| run_hbt(&cfg))?;
        outputs.push(csv_files(&out)?);
    }
    let identical = outputs[0] == outputs[1] && !outputs[0].is_empty();

    let constants = AtomicConstants::default();
    let train = PulseTrainConfig::single_window(first_max_pulse(&constants)?, PERIOD, 10);
    let opts = EmitterOptions::default();
    let split = photon_counts(&train, &constants, 91, 0..5_000, &opts)?
        .merge(&photon_counts(&train, &constants, 91, 5_000..10_000, &opts)?);
    let exact_merge = split == photon_counts(&train, &constants, 91, 0..10_000, &opts)?;
    let merged: PhotonCounts = photon_counts(&train, &constants, 92, 0..5_000, &opts)?
        .merge(&photon_counts(&train, &constants, 93, 0..5_000, &opts)?);
    let (a, b) = (merged.statistics(), photon_counts(&train, &constants, 94, 0..10_000, &opts)?.statistics());
    let z_mean = (a.mean - b.mean) / a.mean_se.hypot(b.mean_se);
    let z_p2 = (a.p2_or_more - b.p2_or_more) / a.p2_or_more_se.hypot(b.p2_or_more_se);
    let ok = identical && exact_merge && z_mean.abs() < 3.0 && z_p2.abs() < 3.0;
    Ok((
        ok,
        format!(
            "{} files byte-identical at 1 and 4 threads: {identical}; split ranges merge exactly: {exact_merge}; 5k+5k vs 10k seeds: mean {z_mean:+.2} se, P(>=2) {z_p2:+.2} se",
            outputs[0].len()
        ),
    ))
}

fn c10_occupancy(dir: &Path) -> Outcome {
    let cfg = config_in(dir);
    let s = run_occupancy(&cfg)?;
    let f = s.metric("fraction_occupied").unwrap();
    let target = s.value("configured_mean_occupancy");
    let max = s.value("max_atom_number");
    let ok = cfg.occupancy.steps >= 1_000_000 && max <= 1.0 && (f.value - target).abs() <= 3.0 * f.error();
    Ok((
        ok,
        format!(
            "{} steps, max atom number {max}; occupancy {:.4} +- {:.4} vs configured {target}",
            cfg.occupancy.steps,
            f.value,
            f.error()
        ),
    ))
}

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, id: u32, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let fast = elapsed <= limit;
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => (pass && fast, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            self.failures += 1;
        }
        println!(
            "criterion {id:>2} {}: {name}: {detail} [{:.2} s, limit {} s{}]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if fast { "" } else { ", too slow" }
        );
    }
}

fn main() -> ExitCode {
    // tolerate libtest-style arguments such as --nocapture or filters
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = tmp.path();
    let secs = Duration::from_secs;
    let mut r = Report { failures: 0 };

    r.check(1, "lossless OBE matches sin^2", secs(1), c1_analytic_rabi);
    r.check(2, "pi-pulse excitation", secs(1), c2_pi_efficiency);
    r.check(3, "quantum jumps match the master equation", secs(60), c3_mcwf_vs_obe);
    r.check(4, "two-photon probability", secs(60), c4_two_photon_probability);

    let hbt_dir = root.join("hbt");
    let hbt_cfg = config_in(&hbt_dir);
    let start = Instant::now();
    let hbt = run_hbt(&hbt_cfg);
    let hbt_time = start.elapsed();
    let timed = |f: &dyn Fn(&RunSummary) -> Outcome| -> Outcome {
        match &hbt {
            Ok(s) => f(s),
            Err(e) => Err(e.to_string().into()),
        }
    };
    // both criteria come from one pipeline run, whose time is charged to each
    let hbt_limit = secs(300).saturating_sub(hbt_time);
    r.check(5, "HBT histogram", hbt_limit, || timed(&|s| c5_hbt(s, &hbt_dir)));
    r.check(6, "count-rate budget", hbt_limit, || timed(&|s| c6_count_rates(s, &hbt_cfg)));
    println!("(HBT pipeline run: {:.1} s, counted against criteria 5 and 6)", hbt_time.as_secs_f64());

    r.check(7, "Raman spectroscopy", secs(10), || c7_raman_scan(&root.join("scan")));
    r.check(8, "Raman flopping", secs(10), || c8_raman_flop(&root.join("flop")));
    r.check(9, "determinism and parallel safety", secs(120), || c9_determinism(&root.join("det")));
    r.check(10, "occupancy invariant", secs(30), || c10_occupancy(&root.join("occ")));

    println!("acceptance: {} of 10 criteria passed", 10 - r.failures);
    if r.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
