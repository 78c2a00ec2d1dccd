//! Two-photon Raman coupling between the F=1 and F=2 ground manifolds.
//!
//! With a large single-photon detuning the Λ system reduces to an effective
//! two-level system with Rabi frequency `Ω₁Ω₂ / 2Δ`; differential light shifts
//! are absorbed into the origin of the two-photon detuning axis. The API has
//! no motional degrees of freedom: the beams co-propagate.

use crate::constants::{raman_resonance_offset, units, AtomicConstants, LandeFactors, MagneticField, ZeemanSublevel};
use crate::error::{Error, Result};

/// Below this `|Δ| / max(Ω₁, Ω₂)` the adiabatic elimination is flagged.
pub const ADIABATIC_RATIO_THRESHOLD: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSystemParams {
    /// Dipole-trap beam single-photon Rabi frequency (rad/s).
    pub omega_1: f64,
    /// Second Raman beam single-photon Rabi frequency (rad/s).
    pub omega_2: f64,
    /// Δ (rad/s).
    pub single_photon_detuning: f64,
    /// δ (rad/s), measured from the addressed resonance.
    pub two_photon_detuning: f64,
    /// Power of the second Raman beam (W); `omega_2 ∝ √beam2_power`.
    pub beam2_power: f64,
}

/// Measured two-photon Rabi frequency at a reference beam-2 power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamanCalibration {
    /// Effective Rabi frequency at the anchor (rad/s).
    pub rabi_frequency: f64,
    /// Beam-2 power at the anchor (W).
    pub beam2_power: f64,
}

impl Default for RamanCalibration {
    fn default() -> Self {
        Self {
            rabi_frequency: units::angular(65e3),
            beam2_power: 60e-9,
        }
    }
}

/// Dipole trap at 810 nm against the 780.2 nm line gives Δ ≈ 2π × 14.1 THz.
pub const DEFAULT_SINGLE_PHOTON_DETUNING: f64 = 2.0 * std::f64::consts::PI * 14.14e12;
/// Trap-beam single-photon Rabi frequency used to split the calibrated product.
pub const DEFAULT_OMEGA_1: f64 = 2.0 * std::f64::consts::PI * 10e9;

impl LambdaSystemParams {
    /// Parameters reproducing `calibration` and scaled to `beam2_power` by √P.
    /// `omega_1` and `single_photon_detuning` only fix how the calibrated
    /// product is split between the two beams.
    pub fn calibrated(
        calibration: &RamanCalibration,
        beam2_power: f64,
        omega_1: f64,
        single_photon_detuning: f64,
    ) -> Result<Self> {
        if !(calibration.beam2_power > 0.0) || !(beam2_power >= 0.0) {
            return Err(Error::config("raman.anchor_power_nw", "powers must be positive"));
        }
        if single_photon_detuning == 0.0 {
            return Err(Error::Singular);
        }
        if !(omega_1 > 0.0) {
            return Err(Error::config("raman.omega1_ghz", "trap-beam Rabi frequency must be positive"));
        }
        let omega_2_anchor = 2.0 * single_photon_detuning * calibration.rabi_frequency / omega_1;
        let anchor = Self {
            omega_1,
            omega_2: omega_2_anchor,
            single_photon_detuning,
            two_photon_detuning: 0.0,
            beam2_power: calibration.beam2_power,
        };
        Ok(anchor.with_beam2_power(beam2_power))
    }

    /// Same beams with beam 2 rescaled to `power` (Ω₂ ∝ √P).
    pub fn with_beam2_power(&self, power: f64) -> Self {
        Self {
            omega_2: self.omega_2 * (power / self.beam2_power).sqrt(),
            beam2_power: power,
            ..*self
        }
    }

    pub fn with_two_photon_detuning(&self, detuning: f64) -> Self {
        Self {
            two_photon_detuning: detuning,
            ..*self
        }
    }

    pub fn adiabaticity_ratio(&self) -> f64 {
        self.single_photon_detuning.abs() / self.omega_1.abs().max(self.omega_2.abs())
    }

    /// Warning text when the adiabatic-elimination condition is weak.
    pub fn adiabatic_warning(&self) -> Option<String> {
        let r = self.adiabaticity_ratio();
        (r < ADIABATIC_RATIO_THRESHOLD).then(|| {
            format!("|Δ|/max(Ω₁,Ω₂) = {r:.1} is below {ADIABATIC_RATIO_THRESHOLD}; adiabatic elimination is marginal")
        })
    }
}

/// Two-photon Rabi frequency `Ω₁Ω₂ / 2Δ` (rad/s).
pub fn effective_rabi_frequency(params: &LambdaSystemParams) -> Result<f64> {
    if params.single_photon_detuning == 0.0 {
        return Err(Error::Singular);
    }
    Ok(params.omega_1 * params.omega_2 / (2.0 * params.single_photon_detuning))
}

/// Rabi formula with the generalised Rabi frequency `W = √(Ω² + δ²)`:
/// `(Ω²/W²) sin²(W t / 2)`.
pub fn transfer_probability(rabi: f64, detuning: f64, t: f64) -> f64 {
    let w2 = rabi * rabi + detuning * detuning;
    if w2 == 0.0 {
        return 0.0;
    }
    rabi * rabi / w2 * (0.5 * w2.sqrt() * t).sin().powi(2)
}

/// [`transfer_probability`] with the oscillating part damped by
/// `exp(−damping_rate · t)`, relaxing towards half the resonant amplitude.
pub fn damped_transfer_probability(rabi: f64, detuning: f64, t: f64, damping_rate: f64) -> f64 {
    if damping_rate == 0.0 {
        return transfer_probability(rabi, detuning, t);
    }
    let w2 = rabi * rabi + detuning * detuning;
    if w2 == 0.0 {
        return 0.0;
    }
    0.5 * rabi * rabi / w2 * (1.0 - (-damping_rate * t).exp() * (w2.sqrt() * t).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    /// ΔmF = +1
    PiSigmaPlus,
    /// ΔmF = −1
    PiSigmaMinus,
}

impl Polarization {
    pub fn delta_mf(self) -> i8 {
        match self {
            Polarization::PiSigmaPlus => 1,
            Polarization::PiSigmaMinus => -1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Polarization::PiSigmaPlus => "pi_sigma_plus",
            Polarization::PiSigmaMinus => "pi_sigma_minus",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pi_sigma_plus" => Some(Polarization::PiSigmaPlus),
            "pi_sigma_minus" => Some(Polarization::PiSigmaMinus),
            _ => None,
        }
    }
}

/// F=1 → F=2 sublevel pairs driven by the given polarisation pair.
pub fn allowed_transitions(polarization: Polarization) -> Vec<(ZeemanSublevel, ZeemanSublevel)> {
    let dm = polarization.delta_mf();
    (-1..=1i8)
        .map(|m| {
            let lower = ZeemanSublevel::new(1, m).expect("|mF| <= 1");
            let upper = ZeemanSublevel::new(2, m + dm).expect("|mF + 1| <= 2");
            (lower, upper)
        })
        .collect()
}

/// Raman pulse. `detuning_from_resonance` (Hz) records where a single pulse
/// sits relative to its addressed line; scans sweep the detuning themselves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamanPulse {
    pub duration: f64,
    pub detuning_from_resonance: f64,
}

impl RamanPulse {
    pub fn new(duration: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::config("raman.scan_pulse_us", "Raman pulse duration must be positive"));
        }
        Ok(Self {
            duration,
            detuning_from_resonance: 0.0,
        })
    }
}

/// Initial populations of the F=1 sublevels.
#[derive(Debug, Clone, PartialEq)]
pub struct SublevelPopulation {
    populations: Vec<(ZeemanSublevel, f64)>,
}

impl SublevelPopulation {
    pub fn new(populations: Vec<(ZeemanSublevel, f64)>) -> Result<Self> {
        if populations.iter().any(|(l, p)| l.f() != 1 || !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain("populations must be probabilities on F=1 sublevels".into()));
        }
        let total: f64 = populations.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("populations sum to {total}, expected 1")));
        }
        Ok(Self { populations })
    }

    /// Equal weight over mF = −1, 0, +1.
    pub fn uniform() -> Self {
        Self {
            populations: (-1..=1i8)
                .map(|m| (ZeemanSublevel::new(1, m).expect("valid"), 1.0 / 3.0))
                .collect(),
        }
    }

    pub fn of(&self, level: &ZeemanSublevel) -> f64 {
        self.populations
            .iter()
            .filter(|(l, _)| l.f() == level.f() && l.mf() == level.mf())
            .map(|(_, p)| p)
            .sum()
    }
}

impl Default for SublevelPopulation {
    fn default() -> Self {
        Self::uniform()
    }
}

/// Static context of a Raman measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct RamanSetup {
    pub initial: SublevelPopulation,
    pub field: MagneticField,
    pub polarization: Polarization,
    pub constants: AtomicConstants,
    pub lande: LandeFactors,
    /// Exponential damping of the coherent oscillation (s⁻¹), 0 for none.
    pub damping_rate: f64,
}

impl Default for RamanSetup {
    fn default() -> Self {
        Self {
            initial: SublevelPopulation::uniform(),
            field: MagneticField::default(),
            polarization: Polarization::PiSigmaMinus,
            constants: AtomicConstants::default(),
            lande: LandeFactors::default(),
            damping_rate: 0.0,
        }
    }
}

impl RamanSetup {
    /// `(lower, upper, resonance offset in Hz)` for every allowed pair.
    pub fn resonances(&self) -> Result<Vec<(ZeemanSublevel, ZeemanSublevel, f64)>> {
        allowed_transitions(self.polarization)
            .into_iter()
            .map(|(l, u)| {
                let l = ZeemanSublevel::with_lande(l.f(), l.mf(), self.lande.for_level(l.f()))?;
                let u = ZeemanSublevel::with_lande(u.f(), u.mf(), self.lande.for_level(u.f()))?;
                Ok((l, u, raman_resonance_offset(&l, &u, self.field, &self.constants)?))
            })
            .collect()
    }
}

/// F=2 population against Raman difference-frequency detuning `scan` (Hz,
/// relative to the zero-field splitting).
pub fn spectroscopy_scan(
    setup: &RamanSetup,
    pulse: &RamanPulse,
    params: &LambdaSystemParams,
    scan: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let rabi = effective_rabi_frequency(params)?;
    let resonances = setup.resonances()?;
    Ok(scan
        .iter()
        .map(|&f| {
            let pop = resonances
                .iter()
                .map(|(l, _, off)| {
                    let delta = units::angular(f - off);
                    setup.initial.of(l) * damped_transfer_probability(rabi, delta, pulse.duration, setup.damping_rate)
                })
                .sum();
            (f, pop)
        })
        .collect())
}

/// F=2 population against Raman pulse length with the difference frequency
/// set on the `addressed` lower sublevel's resonance (plus the params'
/// two-photon detuning).
pub fn rabi_flopping_scan(
    setup: &RamanSetup,
    params: &LambdaSystemParams,
    addressed: &ZeemanSublevel,
    durations: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let rabi = effective_rabi_frequency(params)?;
    let resonances = setup.resonances()?;
    let target = resonances
        .iter()
        .find(|(l, _, _)| l.mf() == addressed.mf() && l.f() == addressed.f())
        .map(|r| r.2)
        .ok_or_else(|| Error::RejectedTransition(format!("{addressed} is not driven by {}", setup.polarization.label())))?;
    Ok(durations
        .iter()
        .map(|&t| {
            let pop = resonances
                .iter()
                .map(|(l, _, off)| {
                    let delta = units::angular(target - off) + params.two_photon_detuning;
                    setup.initial.of(l) * damped_transfer_probability(rabi, delta, t, setup.damping_rate)
                })
                .sum();
            (t, pop)
        })
        .collect())
}

/// A resolved spectral line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedPeak {
    pub center: f64,
    pub height: f64,
    pub fwhm: f64,
}

/// Local maxima above `min_fraction` of the global maximum, each refined by
/// a parabola through its three highest samples, with the full width at half
/// maximum from linear interpolation of the half-height crossings.
pub fn find_peaks(scan: &[(f64, f64)], min_fraction: f64) -> Vec<FittedPeak> {
    let n = scan.len();
    if n < 3 {
        return Vec::new();
    }
    let max = scan.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    for i in 1..n - 1 {
        let (y0, y1, y2) = (scan[i - 1].1, scan[i].1, scan[i + 1].1);
        if !(y1 > y0 && y1 >= y2 && y1 >= min_fraction * max) {
            continue;
        }
        let step = scan[i + 1].0 - scan[i].0;
        let denom = y0 - 2.0 * y1 + y2;
        let shift = if denom != 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
        let center = scan[i].0 + shift.clamp(-0.5, 0.5) * step;
        let half = 0.5 * y1;
        let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
            let mut prev = i;
            for j in range {
                if scan[j].1 < half {
                    let (xa, ya) = scan[prev];
                    let (xb, yb) = scan[j];
                    return Some(xb + (half - yb) * (xa - xb) / (ya - yb));
                }
                prev = j;
            }
            None
        };
        let left = crossing(&mut (0..i).rev());
        let right = crossing(&mut (i + 1..n));
        let fwhm = match (left, right) {
            (Some(l), Some(r)) => r - l,
            _ => f64::NAN,
        };
        peaks.push(FittedPeak { center, height: y1, fwhm });
    }
    peaks
}

/// Least-squares fit of `c₀ + c₁ cos(Ω t)` to a flopping curve; returns Ω (rad/s).
pub fn fit_rabi_frequency(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.len() < 5 {
        return Err(Error::Analysis("need at least five flopping samples".into()));
    }
    let span = samples.last().unwrap().0 - samples[0].0;
    let dt = span / (samples.len() - 1) as f64;
    if !(span > 0.0) {
        return Err(Error::Analysis("durations must increase".into()));
    }
    let residual = |omega: f64| -> f64 {
        let n = samples.len() as f64;
        let (mut sc, mut scc, mut sy, mut syc) = (0.0, 0.0, 0.0, 0.0);
        for &(t, y) in samples {
            let c = (omega * t).cos();
            sc += c;
            scc += c * c;
            sy += y;
            syc += y * c;
        }
        let det = n * scc - sc * sc;
        if det.abs() < 1e-12 * n * n {
            return f64::INFINITY;
        }
        let c1 = (n * syc - sc * sy) / det;
        let c0 = (sy - c1 * sc) / n;
        samples.iter().map(|&(t, y)| (y - c0 - c1 * (omega * t).cos()).powi(2)).sum()
    };
    let lo = std::f64::consts::PI / span;
    let hi = std::f64::consts::PI / dt;
    let n_grid = 4000;
    let ratio = (hi / lo).powf(1.0 / n_grid as f64);
    let grid: Vec<f64> = (0..=n_grid).map(|k| lo * ratio.powi(k)).collect();
    let (best, _) = grid
        .iter()
        .map(|&w| (w, residual(w)))
        .fold((lo, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let (mut a, mut b) = (best / ratio, best * ratio);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (residual(c), residual(d));
    while b - a > 1e-12 * best {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = residual(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = residual(d);
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn anchor_params(power: f64) -> LambdaSystemParams {
        LambdaSystemParams::calibrated(&RamanCalibration::default(), power, DEFAULT_OMEGA_1, DEFAULT_SINGLE_PHOTON_DETUNING).unwrap()
    }

    #[test]
    fn effective_rabi_examples() {
        let mut p = anchor_params(60e-9);
        let r = effective_rabi_frequency(&p).unwrap();
        assert!((r / units::angular(65e3) - 1.0).abs() < 1e-12);
        let hi = effective_rabi_frequency(&p.with_beam2_power(10e-3)).unwrap();
        assert!((units::cyclic(hi) / 26.5e6 - 1.0).abs() < 0.02, "{}", units::cyclic(hi));
        p.omega_2 = 0.0;
        assert_eq!(effective_rabi_frequency(&p).unwrap(), 0.0);
        p.single_photon_detuning = 0.0;
        assert!(matches!(effective_rabi_frequency(&p), Err(Error::Singular)));
    }

    #[test]
    fn adiabaticity() {
        assert!(anchor_params(10e-3).adiabatic_warning().is_none());
        let mut p = anchor_params(60e-9);
        p.single_photon_detuning = 10.0 * p.omega_1;
        assert!(p.adiabatic_warning().is_some());
    }

    #[test]
    fn transfer_examples() {
        let w = 1e6;
        assert!((transfer_probability(w, 0.0, PI / w) - 1.0).abs() < 1e-15);
        assert!(transfer_probability(w, 0.0, 2.0 * PI / w).abs() < 1e-15);
        let t = PI / (2f64.sqrt() * w);
        assert!((transfer_probability(w, w, t) - 0.5).abs() < 1e-15);
        assert_eq!(transfer_probability(0.0, 0.0, 1.0), 0.0);
        assert_eq!(damped_transfer_probability(w, 0.0, 0.0, 1e4), 0.0);
        // damped curve settles at half the resonant amplitude
        assert!((damped_transfer_probability(w, 0.0, 1.0, 1e4) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn selection_rules() {
        let minus = allowed_transitions(Polarization::PiSigmaMinus);
        let plus = allowed_transitions(Polarization::PiSigmaPlus);
        assert_eq!(minus.len(), 3);
        assert_eq!(plus.len(), 3);
        let has = |v: &[(ZeemanSublevel, ZeemanSublevel)], a: i8, b: i8| v.iter().any(|(l, u)| l.mf() == a && u.mf() == b);
        assert!(has(&minus, -1, -2));
        assert!(has(&minus, 0, -1));
        assert!(plus.iter().all(|(l, u)| u.mf() - l.mf() == 1));
    }

    #[test]
    fn scan_peaks_at_zeeman_offsets() {
        let setup = RamanSetup::default();
        let params = anchor_params(60e-9);
        let pulse = RamanPulse::new(PI / effective_rabi_frequency(&params).unwrap()).unwrap();
        let step = 2e3;
        let grid: Vec<f64> = (0..=8500).map(|k| -12e6 + k as f64 * step).collect();
        let scan = spectroscopy_scan(&setup, &pulse, &params, &grid).unwrap();
        let peaks = find_peaks(&scan, 0.5);
        assert_eq!(peaks.len(), 3, "{peaks:?}");
        for (p, want) in peaks.iter().zip([-8.817e6, -2.939e6, 2.939e6]) {
            assert!((p.center - want).abs() < step, "{} vs {want}", p.center);
            assert!((p.height - 1.0 / 3.0).abs() < 1e-3);
        }
    }

    #[test]
    fn zero_field_single_peak() {
        let setup = RamanSetup {
            field: MagneticField::new(0.0).unwrap(),
            ..Default::default()
        };
        let params = anchor_params(60e-9);
        let pulse = RamanPulse::new(PI / effective_rabi_frequency(&params).unwrap()).unwrap();
        let grid: Vec<f64> = (-500..=500).map(|k| k as f64 * 1e3).collect();
        let peaks = find_peaks(&spectroscopy_scan(&setup, &pulse, &params, &grid).unwrap(), 0.5);
        assert_eq!(peaks.len(), 1);
        assert!(peaks[0].center.abs() < 1e3);
        assert!((peaks[0].height - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flopping_frequency_and_amplitude() {
        let setup = RamanSetup::default();
        let params = anchor_params(60e-9);
        let addressed = ZeemanSublevel::new(1, -1).unwrap();
        let durations: Vec<f64> = (0..=400).map(|k| k as f64 * 0.125e-6).collect();
        let curve = rabi_flopping_scan(&setup, &params, &addressed, &durations).unwrap();
        assert_eq!(curve[0].1, 0.0);
        let max = curve.iter().map(|p| p.1).fold(0.0, f64::max);
        assert!((max - 1.0 / 3.0).abs() < 1e-3, "{max}");
        let w = fit_rabi_frequency(&curve).unwrap();
        assert!((units::cyclic(w) / 65e3 - 1.0).abs() < 1e-3, "{}", units::cyclic(w));
        assert!(rabi_flopping_scan(&setup, &params, &ZeemanSublevel::new(2, 0).unwrap(), &durations).is_err());
    }

    #[test]
    fn population_validation() {
        let l = ZeemanSublevel::new(1, 0).unwrap();
        assert!(SublevelPopulation::new(vec![(l, 0.5)]).is_err());
        assert!(SublevelPopulation::new(vec![(l, 1.0)]).is_ok());
        assert!(SublevelPopulation::new(vec![(ZeemanSublevel::new(2, 0).unwrap(), 1.0)]).is_err());
        assert!((SublevelPopulation::uniform().of(&l) - 1.0 / 3.0).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn transfer_is_probability(rabi in 0.0f64..1e8, det in -1e8f64..1e8, t in 0.0f64..1e-3) {
            let p = transfer_probability(rabi, det, t);
            proptest::prop_assert!((0.0..=1.0 + 1e-15).contains(&p));
            proptest::prop_assert_eq!(transfer_probability(rabi, det, 0.0), 0.0);
            proptest::prop_assert_eq!(p, transfer_probability(rabi, -det, t));
        }

        #[test]
        fn root_power_scaling_is_exact(p in 1e-12f64..1e-1) {
            let params = anchor_params(p);
            let a = effective_rabi_frequency(&params).unwrap();
            let b = effective_rabi_frequency(&params.with_beam2_power(4.0 * p)).unwrap();
            proptest::prop_assert_eq!(b, 2.0 * a);
        }
    }
}
