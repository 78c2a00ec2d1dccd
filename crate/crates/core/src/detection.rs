//! Detection chain and Hanbury Brown–Twiss start-stop correlation analysis.

use crate::constants::DetectionChainParams;
use crate::error::{Error, Result};
use crate::mcwf::{EmissionRecord, PulseTrainConfig};
use crate::rng::{open_unit, Stream, TrajectorySeed};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detector {
    A,
    B,
}

/// Sorted detection timestamps (s) of one detector.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickStream {
    pub detector: Detector,
    pub timestamps: Vec<f64>,
}

impl ClickStream {
    pub fn new(detector: Detector, timestamps: Vec<f64>) -> Result<Self> {
        if timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("click timestamps must be strictly increasing".into()));
        }
        Ok(Self { detector, timestamps })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Copy with every timestamp shifted by `offset`.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            detector: self.detector,
            timestamps: self.timestamps.iter().map(|t| t + offset).collect(),
        }
    }
}

/// Sorted, disjoint counting windows `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSchedule {
    windows: Vec<(f64, f64)>,
}

impl GateSchedule {
    pub fn new(windows: Vec<(f64, f64)>) -> Result<Self> {
        if windows.iter().any(|&(s, e)| !(e > s)) {
            return Err(Error::config("gates", "every gate window needs end > start"));
        }
        if windows.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(Error::config("gates", "gate windows must be sorted and disjoint"));
        }
        Ok(Self { windows })
    }

    /// The excitation windows of every cycle of `train`.
    pub fn from_train(train: &PulseTrainConfig) -> Self {
        Self {
            windows: (0..train.cycles)
                .map(|c| {
                    let s = train.window_start(c);
                    (s, s + train.excitation_window)
                })
                .collect(),
        }
    }

    pub fn windows(&self) -> &[(f64, f64)] {
        &self.windows
    }

    pub fn total_duration(&self) -> f64 {
        self.windows.iter().map(|(s, e)| e - s).sum()
    }

    pub fn contains(&self, t: f64) -> bool {
        let i = self.windows.partition_point(|&(s, _)| s <= t);
        i > 0 && t < self.windows[i - 1].1
    }
}

/// Independent Bernoulli thinning with `total_efficiency`, then routing to
/// detector A with probability `splitter_ratio`.
pub fn thin_and_split(
    emissions: &EmissionRecord,
    chain: &DetectionChainParams,
    seed: TrajectorySeed,
) -> (ClickStream, ClickStream) {
    let mut rng = seed.rng(Stream::Detection);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for &t in &emissions.emission_times {
        if rng.random::<f64>() < chain.total_efficiency {
            if rng.random::<f64>() < chain.splitter_ratio {
                a.push(t);
            } else {
                b.push(t);
            }
        }
    }
    (
        ClickStream {
            detector: Detector::A,
            timestamps: a,
        },
        ClickStream {
            detector: Detector::B,
            timestamps: b,
        },
    )
}

/// Superposes a homogeneous Poisson process of rate `chain.spurious_rate()`
/// restricted to the gate windows.
pub fn add_spurious_counts(
    stream: &ClickStream,
    chain: &DetectionChainParams,
    gates: &GateSchedule,
    seed: TrajectorySeed,
) -> ClickStream {
    let rate = chain.spurious_rate();
    if rate <= 0.0 {
        return stream.clone();
    }
    let mut rng = seed.rng(match stream.detector {
        Detector::A => Stream::SpuriousA,
        Detector::B => Stream::SpuriousB,
    });
    let mut extra = Vec::new();
    for &(start, end) in gates.windows() {
        let mut t = start;
        loop {
            t += -open_unit(&mut rng).ln() / rate;
            if t >= end {
                break;
            }
            extra.push(t);
        }
    }
    ClickStream {
        detector: stream.detector,
        timestamps: merge_sorted(&stream.timestamps, &extra),
    }
}

fn merge_sorted(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = if j == b.len() || (i < a.len() && a[i] <= b[j]) {
            i += 1;
            a[i - 1]
        } else {
            j += 1;
            b[j - 1]
        };
        if out.last().is_none_or(|&l| next > l) {
            out.push(next);
        }
    }
    out
}

/// Two-sided delay histogram over `(−range, range)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub bin_width: f64,
    pub range: f64,
    pub counts: Vec<u64>,
    pub total_starts: u64,
}

impl CoincidenceHistogram {
    pub fn new(bin_width: f64, range: f64) -> Result<Self> {
        if !(bin_width > 0.0) || !(range > 0.0) {
            return Err(Error::config("chain.bin_width_ns", "bin width and range must be positive"));
        }
        let half = range / bin_width;
        if (half - half.round()).abs() > 1e-9 * half || half.round() < 1.0 {
            return Err(Error::config(
                "chain.bin_width_ns",
                format!("bin width {bin_width:e} s does not divide range {range:e} s"),
            ));
        }
        Ok(Self {
            bin_width,
            range,
            counts: vec![0; 2 * half.round() as usize],
            total_starts: 0,
        })
    }

    fn half_bins(&self) -> usize {
        self.counts.len() / 2
    }

    /// Lower edge of bin `i`.
    pub fn bin_start(&self, i: usize) -> f64 {
        (i as f64 - self.half_bins() as f64) * self.bin_width
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.bin_start(i) + 0.5 * self.bin_width
    }

    pub fn bin_index(&self, delay: f64) -> Option<usize> {
        if !(delay.abs() < self.range) {
            return None;
        }
        let k = (delay / self.bin_width + 1e-9).floor() as i64 + self.half_bins() as i64;
        (0..self.counts.len() as i64).contains(&k).then_some(k as usize)
    }

    fn record(&mut self, delay: f64) {
        if let Some(i) = self.bin_index(delay) {
            self.counts[i] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds another histogram with identical binning.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.counts.len() != other.counts.len() || self.bin_width != other.bin_width || self.range != other.range {
            return Err(Error::Analysis("cannot merge histograms with different binning".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_starts += other.total_starts;
        Ok(())
    }
}

/// Symmetric start-stop histogram: A-start/B-stop for positive delays and
/// B-start/A-stop for negative delays. Each start contributes at most one
/// stop, the first one within `range`.
pub fn start_stop_histogram(
    a: &ClickStream,
    b: &ClickStream,
    bin_width: f64,
    range: f64,
) -> Result<CoincidenceHistogram> {
    let mut h = CoincidenceHistogram::new(bin_width, range)?;
    h.total_starts = (a.len() + b.len()) as u64;
    let mut j = 0;
    for &ta in &a.timestamps {
        while j < b.len() && b.timestamps[j] < ta {
            j += 1;
        }
        if j < b.len() {
            h.record(b.timestamps[j] - ta);
        }
    }
    let mut i = 0;
    for &tb in &b.timestamps {
        while i < a.len() && a.timestamps[i] <= tb {
            i += 1;
        }
        if i < a.len() {
            let d = a.timestamps[i] - tb;
            if d < range {
                h.record(-d);
            }
        }
    }
    Ok(h)
}

/// Full cross-correlation: every (A, B) pair within `range`.
pub fn cross_correlation_histogram(
    a: &ClickStream,
    b: &ClickStream,
    bin_width: f64,
    range: f64,
) -> Result<CoincidenceHistogram> {
    let mut h = CoincidenceHistogram::new(bin_width, range)?;
    h.total_starts = (a.len() + b.len()) as u64;
    let mut lo = 0;
    for &ta in &a.timestamps {
        while lo < b.len() && b.timestamps[lo] <= ta - range {
            lo += 1;
        }
        for &tb in &b.timestamps[lo..] {
            if tb - ta >= range {
                break;
            }
            h.record(tb - ta);
        }
    }
    Ok(h)
}

/// Background-corrected peak areas and width of an HBT histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakAnalysis {
    pub peak_positions: Vec<f64>,
    pub peak_areas: Vec<f64>,
    pub background_per_bin: f64,
    pub side_peak_coincidences: f64,
    pub zero_delay_residual_ratio: f64,
    pub residual_ratio_se: f64,
    pub one_over_e_half_width: f64,
    pub width_se: f64,
}

impl PeakAnalysis {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("zero_delay_residual_ratio = {}\n", self.zero_delay_residual_ratio));
        s.push_str(&format!("zero_delay_residual_ratio_se = {}\n", self.residual_ratio_se));
        s.push_str(&format!("one_over_e_half_width_ns = {}\n", self.one_over_e_half_width * 1e9));
        s.push_str(&format!("one_over_e_half_width_se_ns = {}\n", self.width_se * 1e9));
        s.push_str(&format!("background_per_bin = {}\n", self.background_per_bin));
        s.push_str(&format!("side_peak_coincidences = {}\n", self.side_peak_coincidences));
        for (t, a) in self.peak_positions.iter().zip(&self.peak_areas) {
            s.push_str(&format!("peak_area[{:+.0} ns] = {}\n", t * 1e9, a));
        }
        s
    }
}

/// Peak analysis of a histogram with peaks at multiples of `period`.
///
/// Side-peak flanks are folded onto `d = |t − t_k|` and fitted with
/// `a (e^{−d/τ} + e^{−(P−d)/τ}) + b`, which yields the 1/e half width `τ` and,
/// unless `known_background` supplies it, the flat background `b`. The fitted
/// `b` is only loosely constrained when the peak tails overlap, so an
/// independently measured accidental level gives far tighter peak areas. `decay_time` only brackets the search
/// and sets the inner fit edge at `τ_hint/4`, clear of the pulse rounding.
/// Peak areas integrate `±period/2` after removing `b` and the fitted
/// neighbour tails, so adjacent peaks do not leak into the zero-delay area.
pub fn analyze_peaks(
    h: &CoincidenceHistogram,
    period: f64,
    decay_time: f64,
    known_background: Option<f64>,
) -> Result<PeakAnalysis> {
    if h.total() == 0 {
        return Err(Error::Analysis("empty histogram".into()));
    }
    if !(period > 0.0) || !(decay_time > 0.0) {
        return Err(Error::Analysis("period and decay time must be positive".into()));
    }
    if h.range < 5.0 * period * (1.0 - 1e-9) {
        return Err(Error::Analysis("histogram must span at least five periods each side".into()));
    }
    let kmax = ((h.range - 0.5 * period) / period + 1e-9).floor() as i64;
    if kmax < 2 {
        return Err(Error::Analysis("need at least two side peaks each side".into()));
    }

    // Folded side-peak flanks, averaged per slot. A flank whose neighbouring
    // peak is the zero-delay peak is left out so the model below holds.
    let nfold = (0.5 * period / h.bin_width).floor() as usize;
    let mut sum = vec![0.0; nfold];
    let mut num = vec![0usize; nfold];
    for i in 0..h.counts.len() {
        let t = h.bin_center(i);
        let k = (t / period).round() as i64;
        let signed = t - k as f64 * period;
        let neighbour = k + if signed >= 0.0 { 1 } else { -1 };
        if k == 0 || k.abs() > kmax || neighbour == 0 {
            continue;
        }
        let slot = (signed.abs() / h.bin_width).floor() as usize;
        if slot < nfold {
            sum[slot] += h.counts[i] as f64;
            num[slot] += 1;
        }
    }
    let inner = 0.25 * decay_time;
    let points: Vec<(f64, f64, f64)> = (0..nfold)
        .filter(|&s| num[s] > 0)
        .map(|s| {
            let d = (s as f64 + 0.5) * h.bin_width;
            let n = num[s] as f64;
            // mean counts and its inverse variance
            (d, sum[s] / n, n / (sum[s] / n).max(1.0))
        })
        .filter(|&(d, _, _)| d >= inner)
        .collect();
    if points.len() < 4 {
        return Err(Error::Analysis("too few flank bins for the width fit".into()));
    }
    let shape = |tau: f64, d: f64| (-d / tau).exp() + (-(period - d) / tau).exp();
    // weighted linear least squares of y = a f(d) + b at fixed tau
    let solve = |tau: f64| -> (f64, f64, f64) {
        let (mut sw, mut sf, mut sy, mut sff, mut sfy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(d, y, w) in &points {
            let f = shape(tau, d);
            sw += w;
            sf += w * f;
            sy += w * y;
            sff += w * f * f;
            sfy += w * f * y;
        }
        let (a, b) = match known_background {
            Some(b) => ((sfy - b * sf) / sff, b),
            None => {
                let det = sw * sff - sf * sf;
                ((sw * sfy - sf * sy) / det, (sff * sy - sf * sfy) / det)
            }
        };
        let chi2 = points
            .iter()
            .map(|&(d, y, w)| w * (y - a * shape(tau, d) - b).powi(2))
            .sum();
        (a, b, chi2)
    };
    let (mut lo, mut hi) = ((0.1 * decay_time).ln(), (10.0 * decay_time).ln());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (solve(x1.exp()).2, solve(x2.exp()).2);
    for _ in 0..200 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = solve(x1.exp()).2;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = solve(x2.exp()).2;
        }
    }
    let width = (0.5 * (lo + hi)).exp();
    let (amplitude, background, chi2) = solve(width);
    if !(amplitude > 0.0) || width > 9.9 * decay_time || width < 0.11 * decay_time {
        return Err(Error::Analysis("side-peak flanks do not decay".into()));
    }
    let dt = 1e-3 * width;
    let curvature = (solve(width + dt).2 - 2.0 * chi2 + solve(width - dt).2) / (dt * dt);
    let width_se = if curvature > 0.0 { (2.0 / curvature).sqrt() } else { f64::NAN };

    // Window areas with the fitted neighbour tails exchanged back.
    let side_model = |t: f64| amplitude * (-t.abs() / width).exp();
    let ks: Vec<i64> = (-kmax..=kmax).collect();
    let mut areas = Vec::with_capacity(ks.len());
    let mut raw = Vec::with_capacity(ks.len());
    for &k in &ks {
        let centre = k as f64 * period;
        let (mut area, mut r) = (0.0, 0.0);
        for i in 0..h.counts.len() {
            let t = h.bin_center(i);
            let d = t - centre;
            if d >= -0.5 * period && d < 0.5 * period {
                r += h.counts[i] as f64;
                area += h.counts[i] as f64 - background;
                for j in [k - 1, k + 1] {
                    if j != 0 {
                        area -= side_model(t - j as f64 * period);
                    }
                }
            } else if k != 0 && d.abs() < 1.5 * period {
                area += side_model(d);
            }
        }
        areas.push(area);
        raw.push(r);
    }
    let zero = ks.iter().position(|&k| k == 0).expect("k = 0 is always present");
    let n_side = (ks.len() - 1) as f64;
    let side_total: f64 = areas.iter().enumerate().filter(|&(i, _)| i != zero).map(|(_, a)| a).sum();
    let side_raw: f64 = raw.iter().enumerate().filter(|&(i, _)| i != zero).map(|(_, a)| a).sum();
    if !(side_total > 0.0) {
        return Err(Error::Analysis("no side-peak coincidences above background".into()));
    }
    let side_mean = side_total / n_side;
    let ratio = areas[zero] / side_mean;
    let ratio_se = ((raw[zero] / side_mean.powi(2)) + ratio.powi(2) * side_raw / side_total.powi(2)).sqrt();

    Ok(PeakAnalysis {
        peak_positions: ks.iter().map(|&k| k as f64 * period).collect(),
        peak_areas: areas,
        background_per_bin: background,
        side_peak_coincidences: side_total,
        zero_delay_residual_ratio: ratio.max(0.0),
        residual_ratio_se: ratio_se,
        one_over_e_half_width: width,
        width_se,
    })
}
