//! Quantum-jump (Monte Carlo wavefunction) simulation of photon emission.
//!
//! Between jumps the unnormalised amplitude evolves under the effective
//! Hamiltonian `H − iΓ/2 |e⟩⟨e|`. A photon is emitted when the squared norm
//! falls to a uniform random threshold; the atom is then reset to the ground
//! state and a fresh threshold is drawn. During a square pulse the effective
//! Hamiltonian is constant, so the no-jump propagator is the closed-form 2×2
//! matrix exponential; the jump time inside a pulse is located by bisection.
//! Undriven intervals are solved exactly.

use crate::bloch::SquarePulse;
use crate::constants::AtomicConstants;
use crate::error::{Error, Result};
use crate::rng::{open_unit, Stream, TrajectorySeed};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Gated pulse sequence: `cycles` repetitions of an excitation window of
/// back-to-back pulse periods followed by a cooling window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseTrainConfig {
    pub pulse: SquarePulse,
    pub period: f64,
    pub excitation_window: f64,
    pub cooling_window: f64,
    pub cycles: usize,
}

impl Default for PulseTrainConfig {
    fn default() -> Self {
        Self {
            pulse: SquarePulse::default(),
            period: 200e-9,
            excitation_window: 115e-6,
            cooling_window: 885e-6,
            cycles: 100,
        }
    }
}

impl PulseTrainConfig {
    /// One excitation window holding `pulses` periods and no cooling.
    pub fn single_window(pulse: SquarePulse, period: f64, pulses: usize) -> Self {
        Self {
            pulse,
            period,
            excitation_window: period * pulses as f64,
            cooling_window: 0.0,
            cycles: 1,
        }
    }

    pub fn repetition_rate(&self) -> f64 {
        1.0 / self.period
    }

    pub fn validate(&self) -> Result<()> {
        self.pulse.validate()?;
        if !(self.period >= self.pulse.duration) || !self.period.is_finite() {
            return Err(Error::config("train.period_ns", "period must be finite and >= pulse duration"));
        }
        if !(self.cooling_window >= 0.0) {
            return Err(Error::config("train.cooling_window_us", "must be >= 0"));
        }
        if self.cycles == 0 {
            return Err(Error::config("train.cycles", "need at least one cycle"));
        }
        let n = (self.excitation_window / self.period).round();
        if n < 1.0 || (n * self.period - self.excitation_window).abs() > 1e-9 * self.excitation_window {
            return Err(Error::config(
                "train.excitation_window_us",
                "excitation window must hold an integer number of pulse periods",
            ));
        }
        Ok(())
    }

    pub fn pulses_per_window(&self) -> usize {
        (self.excitation_window / self.period).round() as usize
    }

    pub fn cycle_duration(&self) -> f64 {
        self.excitation_window + self.cooling_window
    }

    pub fn total_duration(&self) -> f64 {
        self.cycle_duration() * self.cycles as f64
    }

    pub fn window_start(&self, cycle: usize) -> f64 {
        cycle as f64 * self.cycle_duration()
    }

    /// Fraction of sequence time spent in excitation windows.
    pub fn duty_cycle(&self) -> f64 {
        self.excitation_window / self.cycle_duration()
    }

    /// `(cycle, pulse)` slot whose period contains `t`, if `t` falls inside
    /// an excitation window.
    pub fn pulse_slot(&self, t: f64) -> Option<(usize, usize)> {
        if t < 0.0 {
            return None;
        }
        let cycle = (t / self.cycle_duration()).floor() as usize;
        if cycle >= self.cycles {
            return None;
        }
        let local = t - self.window_start(cycle);
        let pulse = (local / self.period).floor() as usize;
        (pulse < self.pulses_per_window()).then_some((cycle, pulse))
    }
}

/// Where a leaked (dark) atom is returned to the cycling transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RepumpMode {
    /// Instant repump at the next pulse boundary.
    #[default]
    NextPulse,
    /// Dark until the cooling interval that follows the current window.
    NextCooling,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterOptions {
    /// Probability per pulse of off-resonant pumping out of the cycling transition.
    pub leak_probability_per_pulse: f64,
    pub repump: RepumpMode,
    /// Number of leading cycles during which the atom is in the trap;
    /// `None` means all of them.
    pub occupied_cycles: Option<usize>,
}

impl Default for EmitterOptions {
    fn default() -> Self {
        Self {
            leak_probability_per_pulse: 0.0,
            repump: RepumpMode::NextPulse,
            occupied_cycles: None,
        }
    }
}

/// Ordered photon-emission times of one trajectory (s).
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionRecord {
    pub trajectory_id: u64,
    pub emission_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Amplitudes {
    g: C64,
    e: C64,
}

impl Amplitudes {
    const GROUND: Self = Self {
        g: C64::new(1.0, 0.0),
        e: C64::new(0.0, 0.0),
    };

    fn norm_sqr(&self) -> f64 {
        self.g.norm_sqr() + self.e.norm_sqr()
    }
}

#[derive(Debug, Clone, Copy)]
struct Mat2([[C64; 2]; 2]);

impl Mat2 {
    fn apply(&self, v: &Amplitudes) -> Amplitudes {
        let m = &self.0;
        Amplitudes {
            g: m[0][0] * v.g + m[0][1] * v.e,
            e: m[1][0] * v.g + m[1][1] * v.e,
        }
    }
}

/// Constant effective Hamiltonian of a driven interval.
#[derive(Debug, Clone, Copy)]
struct Drive {
    rabi: f64,
    detuning: f64,
    gamma: f64,
}

impl Drive {
    /// `exp(−i H_eff t)` with `H_eff = [[0, Ω/2], [Ω/2, −Δ − iΓ/2]]` in the (g, e) basis.
    fn propagator(&self, t: f64) -> Mat2 {
        let i = C64::i();
        let b = -i * (0.5 * self.rabi * t);
        let d = C64::new(-0.5 * self.gamma, self.detuning) * t;
        // A = [[0, b], [b, d]] = m·I + B with B² = q²·I
        let m = 0.5 * d;
        let q = (m * m + b * b).sqrt();
        let (cosh, sinhc) = if q.norm() < 1e-4 {
            let q2 = q * q;
            (1.0 + q2 / 2.0 + q2 * q2 / 24.0, 1.0 + q2 / 6.0 + q2 * q2 / 120.0)
        } else {
            (q.cosh(), q.sinh() / q)
        };
        let em = m.exp();
        Mat2([
            [em * (cosh - sinhc * m), em * sinhc * b],
            [em * sinhc * b, em * (cosh + sinhc * m)],
        ])
    }
}

/// One unnormalised quantum trajectory and its jump threshold.
struct Walker {
    psi: Amplitudes,
    threshold: f64,
    rng: ChaCha8Rng,
    gamma: f64,
    tolerance: f64,
}

impl Walker {
    fn new(seed: TrajectorySeed, gamma: f64, pulse_duration: f64) -> Self {
        let mut rng = seed.rng(Stream::Emission);
        let threshold = open_unit(&mut rng);
        let tolerance = if gamma > 0.0 {
            (1e-3 / gamma).min(1e-3 * pulse_duration)
        } else {
            1e-3 * pulse_duration
        };
        Self {
            psi: Amplitudes::GROUND,
            threshold,
            rng,
            gamma,
            tolerance,
        }
    }

    fn reset(&mut self) {
        self.psi = Amplitudes::GROUND;
        self.threshold = open_unit(&mut self.rng);
    }

    fn excited_population(&self) -> f64 {
        self.psi.e.norm_sqr() / self.psi.norm_sqr()
    }

    /// Driven evolution over `[t0, t0 + len]`. `full` is the precomputed
    /// propagator for `len`.
    fn drive(&mut self, drive: &Drive, full: &Mat2, t0: f64, len: f64, out: &mut Vec<f64>) {
        let mut t = t0;
        let mut remaining = len;
        let mut u = *full;
        loop {
            let next = u.apply(&self.psi);
            if next.norm_sqr() > self.threshold {
                self.psi = next;
                return;
            }
            let (mut lo, mut hi) = (0.0, remaining);
            while hi - lo > self.tolerance {
                let mid = 0.5 * (lo + hi);
                if drive.propagator(mid).apply(&self.psi).norm_sqr() > self.threshold {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let jump = 0.5 * (lo + hi);
            t += jump;
            out.push(t);
            self.reset();
            remaining -= jump;
            if remaining <= 0.0 {
                return;
            }
            u = drive.propagator(remaining);
        }
    }

    /// Undriven evolution over `[t0, t0 + free.len]`, solved exactly.
    fn free(&mut self, free: &Free, t0: f64, out: &mut Vec<f64>) {
        let ng = self.psi.g.norm_sqr();
        let ne = self.psi.e.norm_sqr();
        if ng + ne * free.decay > self.threshold {
            self.psi.e *= free.factor;
            return;
        }
        // ne·exp(−Γt) = threshold − ng
        let t = (ne / (self.threshold - ng)).ln() / self.gamma;
        out.push(t0 + t.clamp(0.0, free.len));
        self.reset();
    }
}

#[derive(Debug, Clone, Copy)]
struct Free {
    len: f64,
    decay: f64,
    factor: C64,
}

impl Free {
    fn new(len: f64, detuning: f64, gamma: f64) -> Self {
        Self {
            len,
            decay: (-gamma * len).exp(),
            factor: (C64::new(-0.5 * gamma, detuning) * len).exp(),
        }
    }
}

/// Single quantum-jump trajectory over the whole pulse train.
pub fn simulate_trajectory(
    train: &PulseTrainConfig,
    constants: &AtomicConstants,
    seed: TrajectorySeed,
    leak_probability_per_pulse: f64,
) -> Result<EmissionRecord> {
    simulate_trajectory_with(
        train,
        constants,
        seed,
        &EmitterOptions {
            leak_probability_per_pulse,
            ..Default::default()
        },
    )
}

pub fn simulate_trajectory_with(
    train: &PulseTrainConfig,
    constants: &AtomicConstants,
    seed: TrajectorySeed,
    options: &EmitterOptions,
) -> Result<EmissionRecord> {
    train.validate()?;
    let leak = options.leak_probability_per_pulse;
    if !(0.0..1.0).contains(&leak) {
        return Err(Error::config("emitter.leak_probability", "must lie in [0, 1)"));
    }
    let pulse = &train.pulse;
    let gamma = constants.decay_rate;
    let drive = Drive {
        rabi: pulse.rabi_frequency,
        detuning: pulse.detuning,
        gamma,
    };
    let full = drive.propagator(pulse.duration);
    let free = Free::new(train.period - pulse.duration, pulse.detuning, gamma);
    let pulses = train.pulses_per_window();
    let cycles = options.occupied_cycles.unwrap_or(train.cycles).min(train.cycles);

    let mut walker = Walker::new(seed, gamma, pulse.duration);
    let mut times = Vec::new();
    if pulse.rabi_frequency == 0.0 {
        return Ok(EmissionRecord {
            trajectory_id: seed.trajectory_index,
            emission_times: times,
        });
    }
    for cycle in 0..cycles {
        let start = train.window_start(cycle);
        // cooling light leaves the atom in the stretched ground state
        walker.reset();
        let mut dark_until_cooling = false;
        for k in 0..pulses {
            if dark_until_cooling {
                break;
            }
            if leak > 0.0 && walker.rng.random::<f64>() < leak {
                walker.reset();
                match options.repump {
                    RepumpMode::NextPulse => continue,
                    RepumpMode::NextCooling => {
                        dark_until_cooling = true;
                        continue;
                    }
                }
            }
            let t0 = start + k as f64 * train.period;
            walker.drive(&drive, &full, t0, pulse.duration, &mut times);
            walker.free(&free, t0 + pulse.duration, &mut times);
        }
    }
    Ok(EmissionRecord {
        trajectory_id: seed.trajectory_index,
        emission_times: times,
    })
}

/// Per-pulse photon-number counts; additive across trajectories.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhotonCounts {
    pub pulses: u64,
    pub zero: u64,
    pub one: u64,
    pub two_or_more: u64,
    pub photons: u64,
    pub photons_squared: u64,
}

impl PhotonCounts {
    pub fn merge(mut self, other: &Self) -> Self {
        self.pulses += other.pulses;
        self.zero += other.zero;
        self.one += other.one;
        self.two_or_more += other.two_or_more;
        self.photons += other.photons;
        self.photons_squared += other.photons_squared;
        self
    }

    /// Bins the emissions of one record into the pulse periods of `train`.
    pub fn from_record(train: &PulseTrainConfig, record: &EmissionRecord, occupied_cycles: usize) -> Self {
        let pulses = train.pulses_per_window();
        let cycles = occupied_cycles.min(train.cycles);
        let mut per_slot = vec![0u32; pulses * cycles];
        for &t in &record.emission_times {
            if let Some((c, p)) = train.pulse_slot(t) {
                if c < cycles {
                    per_slot[c * pulses + p] += 1;
                }
            }
        }
        let mut counts = Self::default();
        for &n in &per_slot {
            counts.pulses += 1;
            match n {
                0 => counts.zero += 1,
                1 => counts.one += 1,
                _ => counts.two_or_more += 1,
            }
            counts.photons += u64::from(n);
            counts.photons_squared += u64::from(n) * u64::from(n);
        }
        counts
    }

    pub fn statistics(&self) -> PhotonNumberStats {
        let n = self.pulses.max(1) as f64;
        let p = |k: u64| k as f64 / n;
        let se = |k: u64| (p(k) * (1.0 - p(k)) / n).sqrt();
        let mean = self.photons as f64 / n;
        let var = (self.photons_squared as f64 / n - mean * mean).max(0.0);
        PhotonNumberStats {
            pulses: self.pulses,
            p0: p(self.zero),
            p1: p(self.one),
            p2_or_more: p(self.two_or_more),
            p0_se: se(self.zero),
            p1_se: se(self.one),
            p2_or_more_se: se(self.two_or_more),
            mean,
            mean_se: (var / n).sqrt(),
        }
    }
}

/// Per-pulse photon-number probabilities with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonNumberStats {
    pub pulses: u64,
    pub p0: f64,
    pub p1: f64,
    pub p2_or_more: f64,
    pub p0_se: f64,
    pub p1_se: f64,
    pub p2_or_more_se: f64,
    pub mean: f64,
    pub mean_se: f64,
}

impl PhotonNumberStats {
    /// Key-value summary, one `"key": value` pair per line.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "pulses": self.pulses,
            "p0": self.p0,
            "p0_se": self.p0_se,
            "p1": self.p1,
            "p1_se": self.p1_se,
            "p2_or_more": self.p2_or_more,
            "p2_or_more_se": self.p2_or_more_se,
            "mean_photons_per_pulse": self.mean,
            "mean_photons_per_pulse_se": self.mean_se,
        }))
        .expect("plain numbers serialise")
    }
}

/// Photon counts for trajectories `indices` of `master_seed`.
pub fn photon_counts(
    train: &PulseTrainConfig,
    constants: &AtomicConstants,
    master_seed: u64,
    indices: std::ops::Range<u64>,
    options: &EmitterOptions,
) -> Result<PhotonCounts> {
    train.validate()?;
    indices
        .into_par_iter()
        .map(|i| {
            let rec = simulate_trajectory_with(train, constants, TrajectorySeed::new(master_seed, i), options)?;
            Ok(PhotonCounts::from_record(train, &rec, options.occupied_cycles.unwrap_or(train.cycles)))
        })
        .try_reduce(PhotonCounts::default, |a, b| Ok(a.merge(&b)))
}

/// Probabilities of 0, 1 and ≥2 photons per pulse over `n_trajectories`
/// trajectories of the train.
pub fn photon_number_distribution(
    train: &PulseTrainConfig,
    constants: &AtomicConstants,
    n_trajectories: u64,
    master_seed: u64,
) -> Result<PhotonNumberStats> {
    if n_trajectories == 0 {
        return Err(Error::config("trajectories", "need at least one trajectory"));
    }
    Ok(photon_counts(train, constants, master_seed, 0..n_trajectories, &EmitterOptions::default())?.statistics())
}

/// Conditional excited population of one trajectory on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTrace {
    pub times: Vec<f64>,
    pub excited: Vec<f64>,
    pub emissions: Vec<f64>,
}

/// Traces a single excitation period, starting in the ground state at t = 0
/// with the pulse on `[0, T]`. `times` must be sorted, start at 0 and stay
/// within the period.
pub fn simulate_population_trace(
    pulse: &SquarePulse,
    period: f64,
    constants: &AtomicConstants,
    seed: TrajectorySeed,
    times: &[f64],
) -> Result<PopulationTrace> {
    pulse.validate()?;
    if times.first() != Some(&0.0) || times.windows(2).any(|w| w[1] < w[0]) || times.last().is_some_and(|&t| t > period) {
        return Err(Error::config("trace.times", "grid must be sorted, start at 0 and end within the period"));
    }
    let gamma = constants.decay_rate;
    let drive = Drive {
        rabi: pulse.rabi_frequency,
        detuning: pulse.detuning,
        gamma,
    };
    let mut walker = Walker::new(seed, gamma, pulse.duration);
    let mut emissions = Vec::new();
    let mut excited = Vec::with_capacity(times.len());
    excited.push(walker.excited_population());
    for w in times.windows(2) {
        let (a, b) = (w[0], w[1]);
        let on_end = b.min(pulse.duration);
        if on_end > a {
            let u = drive.propagator(on_end - a);
            walker.drive(&drive, &u, a, on_end - a, &mut emissions);
        }
        let off_start = a.max(pulse.duration);
        if b > off_start {
            walker.free(&Free::new(b - off_start, pulse.detuning, gamma), off_start, &mut emissions);
        }
        excited.push(walker.excited_population());
    }
    Ok(PopulationTrace {
        times: times.to_vec(),
        excited,
        emissions,
    })
}

/// Many traced trajectories with seeds `(master_seed, 0..n)`.
pub fn simulate_population_traces(
    pulse: &SquarePulse,
    period: f64,
    constants: &AtomicConstants,
    master_seed: u64,
    n: u64,
    times: &[f64],
) -> Result<Vec<PopulationTrace>> {
    (0..n)
        .into_par_iter()
        .map(|i| simulate_population_trace(pulse, period, constants, TrajectorySeed::new(master_seed, i), times))
        .collect()
}

/// Trajectory-averaged excited population at `t`, linearly interpolated
/// between grid samples.
pub fn ensemble_population(traces: &[PopulationTrace], t: f64) -> Result<f64> {
    if traces.len() < 100 {
        return Err(Error::Analysis(format!(
            "ensemble average needs at least 100 trajectories, got {}",
            traces.len()
        )));
    }
    let mut sum = 0.0;
    for tr in traces {
        sum += interpolate(&tr.times, &tr.excited, t)?;
    }
    Ok(sum / traces.len() as f64)
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Result<f64> {
    let (first, last) = match (xs.first(), xs.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::Analysis("empty trace".into())),
    };
    if x < first || x > last {
        return Err(Error::Analysis(format!("time {x:e} outside trace grid")));
    }
    let i = xs.partition_point(|&v| v <= x);
    if i == 0 {
        return Ok(ys[0]);
    }
    if i == xs.len() {
        return Ok(ys[xs.len() - 1]);
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    Ok(ys[i - 1] * (1.0 - w) + ys[i] * w)
}
