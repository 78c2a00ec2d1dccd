//! Atomic constants, Zeeman sublevels and the unit conventions shared by the
//! rest of the crate.
//!
//! Dynamics run in SI units: seconds for time and rad/s for every rate that
//! enters an equation of motion. Configuration files and CSV outputs use
//! ns, MHz, G and nW; the helpers in [`units`] convert at that boundary.

use crate::error::{Error, Result};

/// Unit conversions used at the config/output boundary.
pub mod units {
    use std::f64::consts::PI;

    pub const NS: f64 = 1e-9;
    pub const US: f64 = 1e-6;
    pub const NW: f64 = 1e-9;
    pub const MHZ: f64 = 1e6;
    pub const KHZ: f64 = 1e3;
    pub const GHZ: f64 = 1e9;

    /// Cyclic frequency (Hz) to angular rate (rad/s).
    pub fn angular(hz: f64) -> f64 {
        2.0 * PI * hz
    }

    /// Angular rate (rad/s) to cyclic frequency (Hz).
    pub fn cyclic(rad_per_s: f64) -> f64 {
        rad_per_s / (2.0 * PI)
    }
}

/// Default excited-state lifetime of the cycling transition.
pub const DEFAULT_LIFETIME: f64 = 26e-9;
/// Ground-state hyperfine splitting (Hz).
pub const DEFAULT_HYPERFINE_SPLITTING: f64 = 6.8e9;
/// Bohr magneton divided by Planck's constant (Hz/G).
pub const DEFAULT_BOHR_MAGNETON_OVER_H: f64 = 1.3996e6;
/// Quantisation field (G).
pub const DEFAULT_FIELD: f64 = 4.2;

/// Returns the spontaneous decay rate `1/tau`.
///
/// An infinite lifetime is accepted and yields a zero rate, which is how the
/// decay-free limit is expressed.
pub fn decay_rate_from_lifetime(tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!(
            "excited-state lifetime must be positive, got {tau}"
        )));
    }
    Ok(1.0 / tau)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomicConstants {
    /// Excited-state lifetime (s).
    pub excited_lifetime: f64,
    /// Spontaneous decay rate Γ (s⁻¹), always `1 / excited_lifetime`.
    pub decay_rate: f64,
    /// Ground hyperfine splitting (Hz).
    pub hyperfine_splitting: f64,
    /// μ_B/h (Hz/G).
    pub bohr_magneton_over_h: f64,
}

impl AtomicConstants {
    pub fn from_lifetime(tau: f64) -> Result<Self> {
        Ok(Self {
            excited_lifetime: tau,
            decay_rate: decay_rate_from_lifetime(tau)?,
            ..Self::default()
        })
    }

    /// Constants with spontaneous emission switched off.
    pub fn without_decay() -> Self {
        Self {
            excited_lifetime: f64::INFINITY,
            decay_rate: 0.0,
            ..Self::default()
        }
    }
}

impl Default for AtomicConstants {
    fn default() -> Self {
        Self {
            excited_lifetime: DEFAULT_LIFETIME,
            decay_rate: 1.0 / DEFAULT_LIFETIME,
            hyperfine_splitting: DEFAULT_HYPERFINE_SPLITTING,
            bohr_magneton_over_h: DEFAULT_BOHR_MAGNETON_OVER_H,
        }
    }
}

/// Landé factors of the two ground hyperfine manifolds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandeFactors {
    pub f1: f64,
    pub f2: f64,
}

impl Default for LandeFactors {
    fn default() -> Self {
        Self { f1: -0.5, f2: 0.5 }
    }
}

impl LandeFactors {
    pub fn for_level(&self, f: u8) -> f64 {
        match f {
            1 => self.f1,
            2 => self.f2,
            // F' = 3 of the cycling transition
            _ => 2.0 / 3.0,
        }
    }
}

/// A magnetic sublevel |F, mF⟩ with its Landé factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeemanSublevel {
    f: u8,
    mf: i8,
    g_f: f64,
}

impl ZeemanSublevel {
    /// Sublevel with the default rubidium-87 Landé factor for `f`.
    pub fn new(f: u8, mf: i8) -> Result<Self> {
        Self::with_lande(f, mf, LandeFactors::default().for_level(f))
    }

    pub fn with_lande(f: u8, mf: i8, g_f: f64) -> Result<Self> {
        if !(1..=3).contains(&f) {
            return Err(Error::Domain(format!("F must be 1, 2 or 3, got {f}")));
        }
        if mf.unsigned_abs() > f {
            return Err(Error::Domain(format!("|mF| = {} exceeds F = {f}", mf.abs())));
        }
        Ok(Self { f, mf, g_f })
    }

    pub fn f(&self) -> u8 {
        self.f
    }

    pub fn mf(&self) -> i8 {
        self.mf
    }

    pub fn g_f(&self) -> f64 {
        self.g_f
    }
}

impl std::fmt::Display for ZeemanSublevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(F={}, mF={})", self.f, self.mf)
    }
}

/// Magnetic field magnitude in gauss.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct MagneticField(f64);

impl MagneticField {
    pub fn new(gauss: f64) -> Result<Self> {
        if !(gauss >= 0.0) || !gauss.is_finite() {
            return Err(Error::Domain(format!(
                "field magnitude must be finite and non-negative, got {gauss}"
            )));
        }
        Ok(Self(gauss))
    }

    pub fn gauss(&self) -> f64 {
        self.0
    }
}

impl Default for MagneticField {
    fn default() -> Self {
        Self(DEFAULT_FIELD)
    }
}

/// Photon detection chain: collection/detection efficiency, 50/50 splitter
/// and spurious count rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionChainParams {
    pub total_efficiency: f64,
    /// Fraction of detected photons routed to detector A.
    pub splitter_ratio: f64,
    /// Dark count rate of each detector (s⁻¹).
    pub dark_rate_per_detector: f64,
    /// Stray-light rate seen by each detector (s⁻¹).
    pub background_rate: f64,
}

impl Default for DetectionChainParams {
    fn default() -> Self {
        Self {
            total_efficiency: 0.006,
            splitter_ratio: 0.5,
            dark_rate_per_detector: 50.0,
            background_rate: 100.0,
        }
    }
}

impl DetectionChainParams {
    pub fn validate(&self) -> Result<()> {
        for (field, p) in [
            ("chain.total_efficiency", self.total_efficiency),
            ("chain.splitter_ratio", self.splitter_ratio),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(field, format!("probability {p} outside [0, 1]")));
            }
        }
        for (field, r) in [
            ("chain.dark_rate_per_detector_hz", self.dark_rate_per_detector),
            ("chain.background_rate_hz", self.background_rate),
        ] {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::config(field, format!("rate {r} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Total spurious rate added to each detector.
    pub fn spurious_rate(&self) -> f64 {
        self.dark_rate_per_detector + self.background_rate
    }
}

/// Linear Zeeman shift `gF · mF · μ_B/h · B` in Hz.
pub fn zeeman_shift(level: &ZeemanSublevel, field: MagneticField, constants: &AtomicConstants) -> f64 {
    level.g_f * f64::from(level.mf) * constants.bohr_magneton_over_h * field.gauss()
}

/// Position (Hz) of a F=1 → F=2 Raman resonance relative to the zero-field
/// hyperfine splitting.
pub fn raman_resonance_offset(
    lower: &ZeemanSublevel,
    upper: &ZeemanSublevel,
    field: MagneticField,
    constants: &AtomicConstants,
) -> Result<f64> {
    if lower.f != 1 || upper.f != 2 {
        return Err(Error::RejectedTransition(format!(
            "{lower} -> {upper}: expected an F=1 -> F=2 pair"
        )));
    }
    if (i16::from(upper.mf) - i16::from(lower.mf)).abs() > 1 {
        return Err(Error::RejectedTransition(format!(
            "{lower} -> {upper}: |ΔmF| > 1"
        )));
    }
    Ok(zeeman_shift(upper, field, constants) - zeeman_shift(lower, field, constants))
}
