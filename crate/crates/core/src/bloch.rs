//! Optical Bloch equations for the driven two-level cycling transition.
//!
//! The density matrix evolves under `H = -Δ|e⟩⟨e| + (Ω/2)(|e⟩⟨g| + |g⟩⟨e|)`
//! (rotating frame) with a single Lindblad decay channel `√Γ |g⟩⟨e|`. The
//! integrator is a fixed-step classical Runge–Kutta scheme; pulse edges are
//! ideal steps.

use crate::constants::AtomicConstants;
use crate::error::{Error, Result};
use crate::rng::{Stream, TrajectorySeed};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Two-level density matrix. `coherence_*` is the ρ_eg element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochState {
    pub rho_ee: f64,
    pub rho_gg: f64,
    pub coherence_re: f64,
    pub coherence_im: f64,
}

impl BlochState {
    pub fn ground() -> Self {
        Self {
            rho_ee: 0.0,
            rho_gg: 1.0,
            coherence_re: 0.0,
            coherence_im: 0.0,
        }
    }

    pub fn excited() -> Self {
        Self {
            rho_ee: 1.0,
            rho_gg: 0.0,
            coherence_re: 0.0,
            coherence_im: 0.0,
        }
    }

    pub fn trace(&self) -> f64 {
        self.rho_ee + self.rho_gg
    }

    /// Positivity of the density matrix, up to `tol`.
    pub fn is_physical(&self, tol: f64) -> bool {
        let c2 = self.coherence_re.powi(2) + self.coherence_im.powi(2);
        (self.trace() - 1.0).abs() <= tol
            && self.rho_ee >= -tol
            && self.rho_ee <= 1.0 + tol
            && c2 <= self.rho_ee * self.rho_gg + tol
    }
}

/// Square drive pulse. Rates are angular (rad/s), times in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquarePulse {
    pub rabi_frequency: f64,
    pub duration: f64,
    pub detuning: f64,
    pub start_time: f64,
}

pub const DEFAULT_PULSE_DURATION: f64 = 4e-9;

impl SquarePulse {
    pub fn new(rabi_frequency: f64, duration: f64) -> Result<Self> {
        let p = Self {
            rabi_frequency,
            duration,
            detuning: 0.0,
            start_time: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Resonant pulse of the given area (rad).
    pub fn with_area(area: f64, duration: f64) -> Result<Self> {
        Self::new(area / duration, duration)
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn area(&self) -> f64 {
        self.rabi_frequency * self.duration
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::config("train.pulse_duration_ns", "pulse duration must be positive"));
        }
        if !(self.rabi_frequency >= 0.0) || !self.rabi_frequency.is_finite() {
            return Err(Error::config("train.rabi_frequency", "Rabi frequency must be >= 0"));
        }
        if !self.detuning.is_finite() {
            return Err(Error::config("train.detuning_mhz", "detuning must be finite"));
        }
        Ok(())
    }
}

impl Default for SquarePulse {
    fn default() -> Self {
        Self {
            rabi_frequency: PI / DEFAULT_PULSE_DURATION,
            duration: DEFAULT_PULSE_DURATION,
            detuning: 0.0,
            start_time: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseDistribution {
    GaussianTruncatedAtZero,
}

/// Pulse-to-pulse peak power fluctuations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityNoiseModel {
    pub relative_rms: f64,
    pub distribution: NoiseDistribution,
}

impl Default for IntensityNoiseModel {
    fn default() -> Self {
        Self {
            relative_rms: 0.10,
            distribution: NoiseDistribution::GaussianTruncatedAtZero,
        }
    }
}

impl IntensityNoiseModel {
    pub fn noiseless() -> Self {
        Self {
            relative_rms: 0.0,
            ..Self::default()
        }
    }

    /// Multiplicative peak-power factor (mean 1 before truncation).
    pub fn sample_factor<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.relative_rms == 0.0 {
            return 1.0;
        }
        match self.distribution {
            NoiseDistribution::GaussianTruncatedAtZero => loop {
                let z: f64 = rng.sample(StandardNormal);
                let f = 1.0 + self.relative_rms * z;
                if f > 0.0 {
                    return f;
                }
            },
        }
    }
}

/// Average-power grid and the √P → Ω mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAxis {
    /// Average powers (W).
    pub average_power: Vec<f64>,
    /// rad/s per √W.
    pub power_to_rabi_coefficient: f64,
}

impl PowerAxis {
    /// Axis calibrated so that `pi_power` produces a π pulse of length `duration`.
    pub fn calibrated(average_power: Vec<f64>, pi_power: f64, duration: f64) -> Self {
        Self {
            average_power,
            power_to_rabi_coefficient: PI / duration / pi_power.sqrt(),
        }
    }

    pub fn rabi_frequency(&self, power: f64) -> f64 {
        self.power_to_rabi_coefficient * power.max(0.0).sqrt()
    }
}

/// Decay-free resonant excitation probability `sin²(ΩT/2)`.
pub fn analytic_excitation_probability(omega: f64, duration: f64) -> f64 {
    (0.5 * omega * duration).sin().powi(2)
}

/// Integration step used when callers do not pick one: `min(T, 1/Γ) / 1000`.
pub fn default_step(pulse: &SquarePulse, constants: &AtomicConstants) -> f64 {
    pulse.duration.min(constants.excited_lifetime) / 1000.0
}

// ρ_ee, ρ_gg, Re ρ_eg, Im ρ_eg, emitted photon number
type Vector = [f64; 5];

#[derive(Clone, Copy)]
struct Obe {
    rabi: f64,
    detuning: f64,
    gamma: f64,
}

impl Obe {
    fn rhs(&self, s: &Vector) -> Vector {
        let [ree, rgg, x, y, _] = *s;
        let Obe { rabi, detuning, gamma } = *self;
        let drive = rabi * y;
        [
            -drive - gamma * ree,
            drive + gamma * ree,
            -detuning * y - 0.5 * gamma * x,
            detuning * x - 0.5 * rabi * (rgg - ree) - 0.5 * gamma * y,
            gamma * ree,
        ]
    }

    fn rk4(&self, s: &Vector, h: f64) -> Vector {
        let axpy = |a: &Vector, k: &Vector, c: f64| -> Vector {
            let mut out = *a;
            for (o, ki) in out.iter_mut().zip(k) {
                *o += c * ki;
            }
            out
        };
        let k1 = self.rhs(s);
        let k2 = self.rhs(&axpy(s, &k1, 0.5 * h));
        let k3 = self.rhs(&axpy(s, &k2, 0.5 * h));
        let k4 = self.rhs(&axpy(s, &k3, h));
        let mut out = *s;
        for i in 0..5 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// Integrates over `duration` in equal steps no longer than `step`,
    /// calling `visit` after each step with the elapsed time.
    fn integrate(&self, mut s: Vector, duration: f64, step: f64, mut visit: impl FnMut(f64, &Vector)) -> Vector {
        if duration <= 0.0 {
            return s;
        }
        let n = (duration / step).ceil().max(1.0) as usize;
        let h = duration / n as f64;
        for i in 1..=n {
            s = self.rk4(&s, h);
            visit(i as f64 * h, &s);
        }
        s
    }
}

fn to_vector(s: &BlochState) -> Vector {
    [s.rho_ee, s.rho_gg, s.coherence_re, s.coherence_im, 0.0]
}

fn to_state(v: &Vector) -> BlochState {
    BlochState {
        rho_ee: v[0],
        rho_gg: v[1],
        coherence_re: v[2],
        coherence_im: v[3],
    }
}

fn check_step(pulse: &SquarePulse, constants: &AtomicConstants, step: f64) -> Result<()> {
    if !(step > 0.0) {
        return Err(Error::config("step", "integration step must be positive"));
    }
    if step > pulse.duration / 100.0 || step > constants.excited_lifetime / 100.0 {
        return Err(Error::config(
            "step",
            format!(
                "step {step:e} s exceeds min(pulse duration, lifetime)/100 = {:e} s",
                pulse.duration.min(constants.excited_lifetime) / 100.0
            ),
        ));
    }
    Ok(())
}

/// Time-sampled OBE solution.
///
/// Samples run from `pulse.start_time` through the pulse and then through
/// `free_decay` seconds of undriven evolution (zero for none). The first
/// sample is the initial state.
pub fn evolve_obe(
    initial: BlochState,
    pulse: &SquarePulse,
    constants: &AtomicConstants,
    step: f64,
    free_decay: f64,
) -> Result<Vec<(f64, BlochState)>> {
    pulse.validate()?;
    check_step(pulse, constants, step)?;
    if !(free_decay >= 0.0) {
        return Err(Error::config("free_decay", "free-decay duration must be >= 0"));
    }
    let t0 = pulse.start_time;
    let driven = Obe {
        rabi: pulse.rabi_frequency,
        detuning: pulse.detuning,
        gamma: constants.decay_rate,
    };
    let free = Obe { rabi: 0.0, ..driven };
    let capacity = (pulse.duration / step).ceil() as usize + (free_decay / step).ceil() as usize + 1;
    let mut out = Vec::with_capacity(capacity);
    out.push((t0, initial));
    let end = driven.integrate(to_vector(&initial), pulse.duration, step, |t, s| {
        out.push((t0 + t, to_state(s)))
    });
    let t1 = t0 + pulse.duration;
    free.integrate(end, free_decay, step, |t, s| out.push((t1 + t, to_state(s))));
    Ok(out)
}

/// State at the end of the pulse, without storing the trajectory.
pub fn final_state(
    initial: BlochState,
    pulse: &SquarePulse,
    constants: &AtomicConstants,
    step: f64,
) -> Result<BlochState> {
    pulse.validate()?;
    check_step(pulse, constants, step)?;
    let obe = Obe {
        rabi: pulse.rabi_frequency,
        detuning: pulse.detuning,
        gamma: constants.decay_rate,
    };
    Ok(to_state(&obe.integrate(to_vector(&initial), pulse.duration, step, |_, _| {})))
}

/// Expected number of spontaneously emitted photons in one excitation period,
/// `∫₀^period Γ ρ_ee dt`, starting from the ground state.
///
/// The in-pulse part is integrated alongside the Bloch vector; the undriven
/// tail is the exact exponential `ρ_ee(T)(1 − e^{−Γ(period − T)})`.
pub fn mean_photons_per_period(pulse: &SquarePulse, period: f64, constants: &AtomicConstants) -> Result<f64> {
    pulse.validate()?;
    if period < pulse.duration {
        return Err(Error::config("train.period_ns", "period shorter than pulse"));
    }
    if pulse.rabi_frequency == 0.0 {
        return Ok(0.0);
    }
    let obe = Obe {
        rabi: pulse.rabi_frequency,
        detuning: pulse.detuning,
        gamma: constants.decay_rate,
    };
    let step = default_step(pulse, constants);
    let end = obe.integrate(to_vector(&BlochState::ground()), pulse.duration, step, |_, _| {});
    let tail = end[0] * -(-constants.decay_rate * (period - pulse.duration)).exp_m1();
    Ok(end[4] + tail)
}

/// Rabi frequency of the first fluorescence maximum for the template's
/// duration and detuning, searched between pulse areas π/2 and 3π/2.
pub fn first_fluorescence_maximum(template: &SquarePulse, period: f64, constants: &AtomicConstants) -> Result<f64> {
    let photons = |rabi: f64| -> Result<f64> {
        let p = SquarePulse {
            rabi_frequency: rabi,
            ..*template
        };
        mean_photons_per_period(&p, period, constants)
    };
    let base = PI / template.duration;
    let (mut a, mut b) = (0.5 * base, 1.5 * base);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (photons(c)?, photons(d)?);
    while (b - a) > 1e-10 * base {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = photons(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = photons(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Settings of a simulated fluorescence-versus-power sweep.
#[derive(Debug, Clone)]
pub struct RabiCurveRequest {
    pub axis: PowerAxis,
    pub pulse_template: SquarePulse,
    pub noise: IntensityNoiseModel,
    pub period: f64,
    pub detection_efficiency: f64,
    pub samples_per_point: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiCurvePoint {
    /// Average power (W).
    pub average_power: f64,
    /// Mean emitted photons per period, noise averaged.
    pub photons_per_period: f64,
    /// Detected count rate (s⁻¹).
    pub count_rate: f64,
}

/// Noise-averaged detected fluorescence rate over a power axis.
///
/// Each power point draws its peak-power samples from its own random
/// substream (`seed`, point index), so points are evaluated in parallel
/// without affecting the result.
pub fn rabi_curve(request: &RabiCurveRequest, constants: &AtomicConstants, seed: u64) -> Result<Vec<RabiCurvePoint>> {
    if request.samples_per_point == 0 {
        return Err(Error::config("noise.samples_per_point", "need at least one sample"));
    }
    request.pulse_template.validate()?;
    let rep_rate = 1.0 / request.period;
    request
        .axis
        .average_power
        .par_iter()
        .enumerate()
        .map(|(i, &power)| {
            let mut rng = TrajectorySeed::new(seed, i as u64).rng(Stream::IntensityNoise);
            let mut sum = 0.0;
            for _ in 0..request.samples_per_point {
                let peak = power * request.noise.sample_factor(&mut rng);
                let pulse = SquarePulse {
                    rabi_frequency: request.axis.rabi_frequency(peak),
                    ..request.pulse_template
                };
                sum += mean_photons_per_period(&pulse, request.period, constants)?;
            }
            let photons = sum / request.samples_per_point as f64;
            Ok(RabiCurvePoint {
                average_power: power,
                photons_per_period: photons,
                count_rate: photons * rep_rate * request.detection_efficiency,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: midpoint-rule (RK2) integration of the same
    /// equations with trapezoidal photon quadrature, many fine steps.
    fn oracle_photons(rabi: f64, duration: f64, period: f64, gamma: f64) -> f64 {
        let n = 200_000usize;
        let f = |ree: f64, rgg: f64, y: f64, on: bool| -> (f64, f64, f64) {
            let r = if on { rabi } else { 0.0 };
            (-r * y - gamma * ree, r * y + gamma * ree, -0.5 * r * (rgg - ree) - 0.5 * gamma * y)
        };
        let (mut ree, mut rgg, mut y) = (0.0, 1.0, 0.0);
        let mut total = 0.0;
        let mut seg = |len: f64, on: bool, ree: &mut f64, rgg: &mut f64, y: &mut f64| {
            let h = len / n as f64;
            for _ in 0..n {
                let before = *ree;
                let (a, b, c) = f(*ree, *rgg, *y, on);
                let (a2, b2, c2) = f(*ree + 0.5 * h * a, *rgg + 0.5 * h * b, *y + 0.5 * h * c, on);
                *ree += h * a2;
                *rgg += h * b2;
                *y += h * c2;
                total += 0.5 * h * gamma * (before + *ree);
            }
        };
        seg(duration, true, &mut ree, &mut rgg, &mut y);
        seg(period - duration, false, &mut ree, &mut rgg, &mut y);
        total
    }

    #[test]
    fn analytic_law() {
        assert!((analytic_excitation_probability(PI, 1.0) - 1.0).abs() < 1e-15);
        assert!(analytic_excitation_probability(2.0 * PI, 1.0).abs() < 1e-15);
        assert!((analytic_excitation_probability(PI / 2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn free_decay_is_exponential() {
        let c = AtomicConstants::default();
        let pulse = SquarePulse::new(0.0, 26e-9).unwrap();
        let traj = evolve_obe(BlochState::excited(), &pulse, &c, default_step(&pulse, &c), 0.0).unwrap();
        let (t, s) = traj.last().unwrap();
        assert!((t - 26e-9).abs() < 1e-18);
        assert!((s.rho_ee - (-1f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn decay_free_pi_pulse() {
        let c = AtomicConstants::without_decay();
        let pulse = SquarePulse::with_area(PI, 4e-9).unwrap();
        let s = final_state(BlochState::ground(), &pulse, &c, default_step(&pulse, &c)).unwrap();
        assert!((s.rho_ee - 1.0).abs() < 1e-6);
    }

    #[test]
    fn coarse_step_rejected() {
        let c = AtomicConstants::default();
        let pulse = SquarePulse::default();
        assert!(matches!(
            evolve_obe(BlochState::ground(), &pulse, &c, 4e-9 / 50.0, 0.0),
            Err(Error::Config { .. })
        ));
        assert!(evolve_obe(BlochState::ground(), &pulse, &c, 4e-11, 0.0).is_ok());
    }

    #[test]
    fn trajectory_stays_physical() {
        let c = AtomicConstants::default();
        let pulse = SquarePulse::with_area(3.0 * PI, 4e-9).unwrap().with_detuning(2.0 * PI * 50e6);
        let traj = evolve_obe(BlochState::ground(), &pulse, &c, default_step(&pulse, &c), 100e-9).unwrap();
        for (_, s) in &traj {
            assert!((s.trace() - 1.0).abs() < 1e-9);
            assert!(s.is_physical(1e-9), "{s:?}");
        }
    }

    #[test]
    fn step_halving_converges() {
        let c = AtomicConstants::default();
        let pulse = SquarePulse::with_area(PI, 4e-9).unwrap();
        let h = default_step(&pulse, &c);
        let a = final_state(BlochState::ground(), &pulse, &c, h).unwrap();
        let b = final_state(BlochState::ground(), &pulse, &c, h / 2.0).unwrap();
        assert!((a.rho_ee - b.rho_ee).abs() < 1e-8);
    }

    #[test]
    fn photons_per_period_matches_quadrature_oracle() {
        let c = AtomicConstants::default();
        for area in [PI, 2.0 * PI, 3.0 * PI, 0.7] {
            let pulse = SquarePulse::with_area(area, 4e-9).unwrap();
            let got = mean_photons_per_period(&pulse, 200e-9, &c).unwrap();
            let want = oracle_photons(area / 4e-9, 4e-9, 200e-9, c.decay_rate);
            assert!((got - want).abs() < 1e-7, "area {area}: {got} vs {want}");
        }
    }

    #[test]
    fn photons_per_period_examples() {
        let c = AtomicConstants::default();
        let zero = SquarePulse::new(0.0, 4e-9).unwrap();
        assert_eq!(mean_photons_per_period(&zero, 200e-9, &c).unwrap(), 0.0);
        let pi = mean_photons_per_period(&SquarePulse::with_area(PI, 4e-9).unwrap(), 200e-9, &c).unwrap();
        assert!(pi > 0.95 && pi < 1.10, "{pi}");
        let two_pi = mean_photons_per_period(&SquarePulse::with_area(2.0 * PI, 4e-9).unwrap(), 200e-9, &c).unwrap();
        assert!(two_pi < 0.5 * pi, "{two_pi}");
    }

    #[test]
    fn first_maximum_is_near_pi() {
        let c = AtomicConstants::default();
        let rabi = first_fluorescence_maximum(&SquarePulse::default(), 200e-9, &c).unwrap();
        let area = rabi * 4e-9 / PI;
        assert!(area > 0.95 && area < 1.1, "{area}");
        let ree = final_state(
            BlochState::ground(),
            &SquarePulse::new(rabi, 4e-9).unwrap(),
            &c,
            default_step(&SquarePulse::default(), &c),
        )
        .unwrap()
        .rho_ee;
        assert!((ree - 0.95).abs() < 0.02, "{ree}");
    }

    #[test]
    fn noise_factor_is_positive() {
        let mut rng = TrajectorySeed::new(1, 0).rng(Stream::IntensityNoise);
        let wide = IntensityNoiseModel {
            relative_rms: 2.0,
            ..Default::default()
        };
        for _ in 0..10_000 {
            assert!(wide.sample_factor(&mut rng) > 0.0);
        }
        assert_eq!(IntensityNoiseModel::noiseless().sample_factor(&mut rng), 1.0);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn trace_preserved_for_any_drive(area in 0.0f64..20.0, det in -1e9f64..1e9, tau in 5e-9f64..1e-6) {
            let c = AtomicConstants::from_lifetime(tau).unwrap();
            let pulse = SquarePulse::with_area(area, 4e-9).unwrap().with_detuning(det);
            let traj = evolve_obe(BlochState::ground(), &pulse, &c, 3e-11, 20e-9).unwrap();
            for (_, s) in &traj {
                proptest::prop_assert!((s.trace() - 1.0).abs() < 1e-9);
                proptest::prop_assert!(s.is_physical(1e-9));
            }
        }
    }
}
