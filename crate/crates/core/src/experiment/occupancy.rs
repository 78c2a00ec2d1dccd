//! Trap occupancy under collisional blockade.
//!
//! Time advances in steps of one sequence cycle. An empty trap captures an
//! atom with probability `1 − exp(−R·dt)`, the discretised exponential
//! waiting time. An occupied trap loses its atom when a second one arrives
//! (both are ejected) or, independently, with probability `1 − survival`.
//! A second atom is therefore never held.

use crate::error::{Error, Result};
use crate::rng::{Stream, TrajectorySeed};
use rand::Rng;

/// Number of atoms in the trap. There is deliberately no variant for two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AtomNumber {
    Zero,
    One,
}

impl AtomNumber {
    pub fn count(self) -> u8 {
        match self {
            AtomNumber::Zero => 0,
            AtomNumber::One => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupancyModel {
    /// Expected long-run fraction of occupied time.
    pub mean_occupancy: f64,
    /// Atom arrivals per second.
    pub capture_rate: f64,
    /// Probability of keeping the atom through one cycle.
    pub survival_per_cycle: f64,
}

impl Default for OccupancyModel {
    fn default() -> Self {
        Self {
            mean_occupancy: 0.5,
            capture_rate: 3.0,
            survival_per_cycle: 1.0,
        }
    }
}

impl OccupancyModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mean_occupancy) {
            return Err(Error::config("occupancy.mean_occupancy", "must lie in [0, 1]"));
        }
        if !(self.capture_rate >= 0.0) || !self.capture_rate.is_finite() {
            return Err(Error::config("occupancy.capture_rate_hz", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.survival_per_cycle) {
            return Err(Error::config("occupancy.survival_per_cycle", "must lie in [0, 1]"));
        }
        Ok(())
    }

    fn capture_probability(&self, step: f64) -> f64 {
        -(-self.capture_rate * step).exp_m1()
    }

    /// Per-step probability of going from one atom to none.
    fn loss_probability(&self, step: f64) -> f64 {
        let p = self.capture_probability(step);
        p + (1.0 - p) * (1.0 - self.survival_per_cycle)
    }

    /// Stationary occupied fraction of the two-state chain.
    pub fn stationary_occupancy(&self, step: f64) -> f64 {
        let (up, down) = (self.capture_probability(step), self.loss_probability(step));
        if up + down == 0.0 {
            return 0.0;
        }
        up / (up + down)
    }

    /// Standard error of the occupied fraction over `steps` steps of the
    /// stationary chain, including its autocorrelation.
    pub fn occupancy_standard_error(&self, step: f64, steps: u64) -> f64 {
        let (up, down) = (self.capture_probability(step), self.loss_probability(step));
        if up + down == 0.0 {
            return 0.0;
        }
        let pi = up / (up + down);
        let lambda = 1.0 - up - down;
        (pi * (1.0 - pi) / steps as f64 * (1.0 + lambda) / (1.0 - lambda)).sqrt()
    }
}

/// Change points of the trap state, starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTrace {
    pub step: f64,
    pub steps: u64,
    /// `(time, state)` at t = 0 and at every change.
    pub transitions: Vec<(f64, AtomNumber)>,
    pub occupied_steps: u64,
}

impl OccupancyTrace {
    pub fn fraction_occupied(&self) -> f64 {
        self.occupied_steps as f64 / self.steps as f64
    }

    pub fn max_atom_number(&self) -> u8 {
        self.transitions.iter().map(|(_, a)| a.count()).max().unwrap_or(0)
    }
}

/// Simulates `steps` cycles of length `step` (s) from `initial`.
pub fn simulate_occupancy(
    model: &OccupancyModel,
    step: f64,
    steps: u64,
    initial: AtomNumber,
    seed: TrajectorySeed,
) -> Result<OccupancyTrace> {
    model.validate()?;
    if !(step > 0.0) {
        return Err(Error::config("train.cooling_window_us", "cycle duration must be positive"));
    }
    let up = model.capture_probability(step);
    let down = model.loss_probability(step);
    let mut rng = seed.rng(Stream::Occupancy);
    let mut state = initial;
    let mut transitions = vec![(0.0, state)];
    let mut occupied = 0u64;
    for k in 0..steps {
        if state == AtomNumber::One {
            occupied += 1;
        }
        let u: f64 = rng.random();
        let next = match state {
            AtomNumber::Zero if u < up => AtomNumber::One,
            AtomNumber::One if u < down => AtomNumber::Zero,
            s => s,
        };
        if next != state {
            transitions.push(((k + 1) as f64 * step, next));
            state = next;
        }
    }
    Ok(OccupancyTrace {
        step,
        steps,
        transitions,
        occupied_steps: occupied,
    })
}

/// Number of leading cycles an atom loaded at cycle 0 stays for, with a
/// per-cycle survival probability, capped at `cycles`.
pub fn occupied_cycles<R: Rng>(survival: f64, cycles: usize, rng: &mut R) -> usize {
    let mut n = 1;
    while n < cycles && rng.random::<f64>() < survival {
        n += 1;
    }
    n.min(cycles)
}

/// Mean over a sequence of `cycles` of the presence probability `s^k`.
pub fn mean_presence(survival: f64, cycles: usize) -> f64 {
    if survival >= 1.0 {
        return 1.0;
    }
    (1.0 - survival.powi(cycles as i32)) / ((1.0 - survival) * cycles as f64)
}

/// Survival per cycle that scales a peak rate down to `target` on average.
pub fn fit_survival(peak_rate: f64, target: f64, cycles: usize) -> Result<f64> {
    if !(peak_rate > 0.0) || !(target > 0.0) {
        return Err(Error::Analysis("rates must be positive for the survival fit".into()));
    }
    let want = target / peak_rate;
    if want >= 1.0 {
        return Ok(1.0);
    }
    let floor = mean_presence(0.0, cycles);
    if want <= floor {
        return Err(Error::Analysis(format!(
            "target {target} s⁻¹ is below one occupied cycle's worth of counts"
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_presence(mid, cycles) < want {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Wall-clock duty-limited average for a peak rate during excitation.
pub fn duty_limited_rate(peak_rate: f64, excitation_window: f64, cycle_duration: f64) -> f64 {
    peak_rate * excitation_window / cycle_duration
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn no_capture_means_always_empty() {
        let m = OccupancyModel {
            capture_rate: 0.0,
            ..Default::default()
        };
        let tr = simulate_occupancy(&m, 1e-3, 100_000, AtomNumber::Zero, TrajectorySeed::new(1, 0)).unwrap();
        assert_eq!(tr.occupied_steps, 0);
        assert_eq!(tr.transitions.len(), 1);
    }

    #[test]
    fn blockade_balances_to_one_half() {
        let m = OccupancyModel::default();
        assert!((m.stationary_occupancy(1e-3) - 0.5).abs() < 1e-12);
        let tr = simulate_occupancy(&m, 1e-3, 1_000_000, AtomNumber::Zero, TrajectorySeed::new(3, 0)).unwrap();
        let se = m.occupancy_standard_error(1e-3, 1_000_000);
        assert!((tr.fraction_occupied() - 0.5).abs() < 3.0 * se, "{} ± {se}", tr.fraction_occupied());
        assert!(tr.max_atom_number() <= 1);
    }

    #[test]
    fn loss_lowers_occupancy() {
        let m = OccupancyModel {
            survival_per_cycle: 0.99,
            ..Default::default()
        };
        assert!(m.stationary_occupancy(1e-3) < 0.5);
    }

    #[test]
    fn duty_arithmetic() {
        assert!((duty_limited_rate(29000.0, 115e-6, 1e-3) - 29000.0 * 0.115).abs() < 1e-9);
    }

    #[test]
    fn survival_fit_inverts_mean_presence() {
        let s = fit_survival(30_000.0, 9600.0, 100).unwrap();
        assert!((mean_presence(s, 100) * 30_000.0 - 9600.0).abs() < 1e-6);
        assert!(s > 0.9 && s < 1.0);
        assert_eq!(fit_survival(9000.0, 9600.0, 100).unwrap(), 1.0);
        assert!(fit_survival(30_000.0, 100.0, 100).is_err());
    }

    #[test]
    fn occupied_cycles_distribution() {
        let mut rng = TrajectorySeed::new(5, 0).rng(Stream::Occupancy);
        let n = 20_000;
        let s = 0.97;
        let mean: f64 = (0..n).map(|_| occupied_cycles(s, 100, &mut rng) as f64).sum::<f64>() / n as f64;
        // E[min(Geom, 100)] = (1 − s^100)/(1 − s)
        let want = (1.0 - s.powi(100)) / (1.0 - s);
        assert!((mean - want).abs() < 0.05 * want, "{mean} vs {want}");
    }

    proptest! {
        #[test]
        fn never_two_atoms(rate in 0.0f64..2000.0, s in 0.0f64..=1.0, seed in any::<u64>()) {
            let m = OccupancyModel { mean_occupancy: 0.5, capture_rate: rate, survival_per_cycle: s };
            let tr = simulate_occupancy(&m, 1e-3, 2000, AtomNumber::One, TrajectorySeed::new(seed, 0)).unwrap();
            prop_assert!(tr.max_atom_number() <= 1);
            prop_assert!(tr.transitions.windows(2).all(|w| w[0].1 != w[1].1 && w[1].0 > w[0].0));
        }
    }
}
