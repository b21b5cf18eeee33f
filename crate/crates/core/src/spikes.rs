//! Spike, spike-train and baseline-shift analysis of electrical recordings.
//!
//! Detection works on the residual against a running-median baseline. The
//! baseline is re-estimated with detected excursions masked out, so that a
//! dense train does not drag the median up under its own spikes.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpikeError {
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("baseline window must span at least 10 samples")]
    WindowTooShort,
    #[error("baseline window is longer than the recording")]
    WindowTooLong,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("train classification needs kiloohm recordings")]
    WrongUnit,
    #[error("{0} group is empty")]
    EmptyGroup(&'static str),
    #[error("a train needs at least 2 spikes")]
    NotATrain,
    #[error("steps at {0} s and {1} s overlap")]
    OverlappingSteps(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Millivolts,
    Kiloohms,
}

impl std::str::FromStr for Unit {
    type Err = SpikeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mv" | "millivolts" => Ok(Unit::Millivolts),
            "kohm" | "kiloohms" => Ok(Unit::Kiloohms),
            other => Err(SpikeError::InvalidParams(format!("unknown unit {other:?}"))),
        }
    }
}

/// Uniformly sampled recording. Times are relative to the first sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub sample_interval: f64,
    pub samples: Vec<f64>,
    pub unit: Unit,
}

impl Recording {
    pub fn new(sample_interval: f64, samples: Vec<f64>, unit: Unit) -> Result<Self, SpikeError> {
        let rec = Self {
            sample_interval,
            samples,
            unit,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<(), SpikeError> {
        if !(self.sample_interval.is_finite() && self.sample_interval > 0.0) {
            return Err(SpikeError::InvalidRecording("sample interval must be positive".into()));
        }
        if self.samples.len() < 2 {
            return Err(SpikeError::InvalidRecording("need at least 2 samples".into()));
        }
        if let Some(k) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(SpikeError::InvalidRecording(format!("sample {k} is not finite")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.sample_interval
    }

    pub fn duration(&self) -> f64 {
        self.time(self.samples.len().saturating_sub(1))
    }

    /// Parses `t,value` CSV. Sample spacing must be uniform within 1e-6
    /// relative.
    pub fn from_csv(text: &str, unit: Unit) -> Result<Self, SpikeError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim().replace(' ', "") == "t,value" => {}
            Some((i, _)) => {
                return Err(SpikeError::Csv {
                    line: i + 1,
                    message: "expected header `t,value`".into(),
                })
            }
            None => {
                return Err(SpikeError::Csv {
                    line: 1,
                    message: "empty input".into(),
                })
            }
        }
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (i, line) in lines {
            let err = |message: String| SpikeError::Csv { line: i + 1, message };
            let mut fields = line.split(',').map(str::trim);
            let (Some(t), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(err("expected two fields".into()));
            };
            let t: f64 = t.parse().map_err(|e| err(format!("time: {e}")))?;
            let v: f64 = v.parse().map_err(|e| err(format!("value: {e}")))?;
            times.push((i + 1, t));
            samples.push(v);
        }
        if times.len() < 2 {
            return Err(SpikeError::InvalidRecording("need at least 2 samples".into()));
        }
        let dt = times[1].1 - times[0].1;
        if !(dt > 0.0) {
            return Err(SpikeError::Csv {
                line: times[1].0,
                message: "time must increase".into(),
            });
        }
        for w in times.windows(2) {
            let step = w[1].1 - w[0].1;
            if (step - dt).abs() > 1e-6 * dt {
                return Err(SpikeError::Csv {
                    line: w[1].0,
                    message: format!("non-uniform spacing {step} vs {dt}"),
                });
            }
        }
        Recording::new(dt, samples, unit)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (k, v) in self.samples.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.time(k), v));
        }
        out
    }

    /// Residual against a running median over `window` seconds.
    pub fn detrended(&self, window: f64) -> Result<Recording, SpikeError> {
        let half = half_window(self, window)?;
        let base = running_median(&self.samples, half, None);
        Ok(Recording {
            samples: self.samples.iter().zip(&base).map(|(x, b)| x - b).collect(),
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub onset_index: usize,
    pub peak_index: usize,
    pub end_index: usize,
    /// Sub-sample peak time from the quadratic fit, seconds.
    pub peak_time: f64,
    /// Peak minus local baseline, signed.
    pub amplitude: f64,
    /// Full width at half amplitude, seconds.
    pub width: f64,
    pub polarity: Polarity,
    pub unit: Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key(u64, usize);

fn key(x: f64, i: usize) -> Key {
    // order-preserving map of f64 onto u64
    let b = x.to_bits();
    Key(if b >> 63 == 1 { !b } else { b | 1 << 63 }, i)
}

fn key_value(k: &Key) -> f64 {
    let b = if k.0 >> 63 == 1 { k.0 & !(1 << 63) } else { !k.0 };
    f64::from_bits(b)
}

/// Two-set sliding median: `lo` holds the smaller half and is never
/// shorter than `hi`.
#[derive(Default)]
struct MedianWindow {
    lo: BTreeSet<Key>,
    hi: BTreeSet<Key>,
}

impl MedianWindow {
    fn insert(&mut self, x: f64, i: usize) {
        let k = key(x, i);
        match self.lo.last() {
            Some(top) if k > *top => self.hi.insert(k),
            _ => self.lo.insert(k),
        };
        self.rebalance();
    }

    fn len(&self) -> usize {
        self.lo.len() + self.hi.len()
    }

    fn remove(&mut self, x: f64, i: usize) {
        let k = key(x, i);
        if !self.lo.remove(&k) {
            self.hi.remove(&k);
        }
        self.rebalance();
    }

    fn rebalance(&mut self) {
        while self.lo.len() > self.hi.len() + 1 {
            let k = self.lo.pop_last().expect("non-empty");
            self.hi.insert(k);
        }
        while self.hi.len() > self.lo.len() {
            let k = self.hi.pop_first().expect("non-empty");
            self.lo.insert(k);
        }
    }

    fn median(&self) -> Option<f64> {
        let a = key_value(self.lo.last()?);
        if self.lo.len() > self.hi.len() {
            Some(a)
        } else {
            Some(0.5 * (a + key_value(self.hi.first()?)))
        }
    }
}

/// Centered running median over `[i - half, i + half]`, truncated at the
/// ends. Samples flagged in `mask` are left out; positions whose window
/// holds fewer than `half / 2` usable samples are filled by linear
/// interpolation, so a mostly masked window never yields the median of a
/// handful of noisy samples.
pub fn running_median(x: &[f64], half: usize, mask: Option<&[bool]>) -> Vec<f64> {
    let n = x.len();
    let usable = |i: usize| mask.is_none_or(|m| !m[i]);
    let mut w = MedianWindow::default();
    for i in 0..n.min(half + 1) {
        if usable(i) {
            w.insert(x[i], i);
        }
    }
    let min_count = (half / 2).max(1);
    let mut out: Vec<Option<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        out.push(if w.len() >= min_count { w.median() } else { None });
        let enter = i + half + 1;
        if enter < n && usable(enter) {
            w.insert(x[enter], enter);
        }
        if i >= half && usable(i - half) {
            w.remove(x[i - half], i - half);
        }
    }
    fill_gaps(&out)
}

fn fill_gaps(v: &[Option<f64>]) -> Vec<f64> {
    let known: Vec<(usize, f64)> = v
        .iter()
        .enumerate()
        .filter_map(|(i, x)| x.map(|x| (i, x)))
        .collect();
    if known.is_empty() {
        return vec![0.0; v.len()];
    }
    let mut out = Vec::with_capacity(v.len());
    let mut k = 0;
    for i in 0..v.len() {
        while k + 1 < known.len() && known[k + 1].0 <= i {
            k += 1;
        }
        let (i0, x0) = known[k];
        out.push(if i <= i0 || k + 1 == known.len() {
            x0
        } else {
            let (i1, x1) = known[k + 1];
            x0 + (x1 - x0) * (i - i0) as f64 / (i1 - i0) as f64
        });
    }
    out
}

fn moving_average(x: &[f64], half: usize) -> Vec<f64> {
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(half), (i + half + 1).min(n));
            (prefix[b] - prefix[a]) / (b - a) as f64
        })
        .collect()
}

fn half_window(rec: &Recording, window: f64) -> Result<usize, SpikeError> {
    rec.validate()?;
    if !(window.is_finite() && window >= 10.0 * rec.sample_interval * (1.0 - 1e-9)) {
        return Err(SpikeError::WindowTooShort);
    }
    if window > rec.duration() {
        return Err(SpikeError::WindowTooLong);
    }
    Ok(((window / rec.sample_interval).round() as usize) / 2)
}

#[derive(Debug, Clone, Copy)]
struct Run {
    start: usize,
    end: usize,
    sign: f64,
}

fn find_runs(rs: &[f64], threshold: f64, min_len: usize) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    let mut i = 0;
    while i < rs.len() {
        let sign = if rs[i] >= threshold {
            1.0
        } else if rs[i] <= -threshold {
            -1.0
        } else {
            i += 1;
            continue;
        };
        let start = i;
        while i < rs.len() && sign * rs[i] >= threshold {
            i += 1;
        }
        let run = Run {
            start,
            end: i - 1,
            sign,
        };
        match runs.last_mut() {
            Some(prev) if prev.sign == sign && start - prev.end - 1 < min_len => prev.end = run.end,
            _ => runs.push(run),
        }
    }
    runs.retain(|r| r.end + 1 - r.start >= min_len);
    runs
}

/// Least-squares polynomial fit of `y` against `x`, lowest order first.
fn polyfit<const D: usize>(x: &[f64], y: &[f64]) -> Option<[f64; D]> {
    let mut a = [[0.0f64; D]; D];
    let mut b = [0.0f64; D];
    for (&xi, &yi) in x.iter().zip(y) {
        let mut p = [1.0f64; D];
        for k in 1..D {
            p[k] = p[k - 1] * xi;
        }
        for r in 0..D {
            b[r] += p[r] * yi;
            for c in 0..D {
                a[r][c] += p[r] * p[c];
            }
        }
    }
    for col in 0..D {
        let piv = (col..D).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..D {
            let f = a[r][col] / a[col][col];
            for c in col..D {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut out = [0.0; D];
    for r in (0..D).rev() {
        let s: f64 = (r + 1..D).map(|c| a[r][c] * out[c]).sum();
        out[r] = (b[r] - s) / a[r][r];
    }
    Some(out)
}

/// Index position where the residual crosses `level`, from a straight-line
/// fit of `r` around the first sample past the crossing.
fn half_crossing(r: &[f64], rs: &[f64], peak: usize, level: f64, sign: f64, step: isize, hw: usize) -> f64 {
    let n = r.len() as isize;
    let mut i = peak as isize;
    while i + step >= 0 && i + step < n && sign * rs[i as usize] > sign * level {
        i += step;
    }
    // crossing lies between i - step (above) and i (below)
    let inside = (i - step).clamp(0, n - 1) as usize;
    let outside = i as usize;
    let lo = outside.min(inside).saturating_sub(hw);
    let hi = (outside.max(inside) + hw).min(r.len() - 1);
    let xs: Vec<f64> = (lo..=hi).map(|k| k as f64 - outside as f64).collect();
    if let Some([c0, c1]) = polyfit::<2>(&xs, &r[lo..=hi]) {
        if c1 * sign * (step as f64) < 0.0 {
            let x = (level - c0) / c1;
            if x.abs() <= (hw + 1) as f64 {
                return outside as f64 + x;
            }
        }
    }
    let (a, b) = (rs[inside], rs[outside]);
    if a == b {
        return outside as f64;
    }
    inside as f64 + (outside as f64 - inside as f64) * (a - level) / (a - b)
}

/// Detects excursions of at least `threshold` from a running-median baseline
/// lasting at least `min_width` seconds.
pub fn detect_spikes(
    rec: &Recording,
    baseline_window: f64,
    threshold: f64,
    min_width: f64,
) -> Result<Vec<Spike>, SpikeError> {
    let half = half_window(rec, baseline_window)?;
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(SpikeError::InvalidParams("threshold must be positive".into()));
    }
    if !(min_width.is_finite() && min_width >= 0.0) {
        return Err(SpikeError::InvalidParams("min_width must be non-negative".into()));
    }
    let dt = rec.sample_interval;
    let x = &rec.samples;
    let n = x.len();
    let min_len = ((min_width / dt).ceil() as usize).max(1);
    let smooth_half = min_len / 8;

    let mut mask = vec![false; n];
    let mut r = Vec::new();
    let mut rs = Vec::new();
    let mut runs = Vec::new();
    for _ in 0..4 {
        let base = running_median(x, half, Some(&mask));
        r = x.iter().zip(&base).map(|(a, b)| a - b).collect::<Vec<_>>();
        rs = moving_average(&r, smooth_half);
        runs = find_runs(&rs, threshold, min_len);
        let mut next = vec![false; n];
        for run in &runs {
            let pad = run.end + 1 - run.start;
            let (a, b) = (run.start.saturating_sub(pad), (run.end + pad).min(n - 1));
            next[a..=b].iter_mut().for_each(|m| *m = true);
        }
        if next == mask {
            break;
        }
        mask = next;
    }

    let mut spikes = Vec::with_capacity(runs.len());
    for run in runs {
        let s = run.sign;
        let peak = (run.start..=run.end)
            .max_by(|&a, &b| (s * rs[a]).total_cmp(&(s * rs[b])))
            .expect("non-empty run");
        if peak == 0 || peak == n - 1 {
            continue;
        }
        let top = s * rs[peak];
        let reach = |step: isize, frac: f64| {
            let mut i = peak as isize;
            while i + step >= 0 && (i + step) < n as isize && s * rs[(i + step) as usize] >= frac * top {
                i += step;
            }
            i as usize
        };
        let (al, ar) = (reach(-1, 0.75), reach(1, 0.75));
        let (al, ar) = (al.min(peak.saturating_sub(2)), (ar.max(peak + 2)).min(n - 1));
        let xs: Vec<f64> = (al..=ar).map(|k| k as f64 - peak as f64).collect();
        let (amplitude, offset) = match polyfit::<3>(&xs, &r[al..=ar]) {
            Some([c0, c1, c2]) if c2 * s < 0.0 => {
                let v = (-c1 / (2.0 * c2)).clamp(xs[0], xs[xs.len() - 1]);
                (c0 + c1 * v + c2 * v * v, v)
            }
            _ => (rs[peak], 0.0),
        };
        if amplitude.abs() < threshold || amplitude * s <= 0.0 {
            continue;
        }
        let rough = (reach(1, 0.5) - reach(-1, 0.5)).max(2);
        let hw = ((0.2 * rough as f64).round() as usize).max(2);
        let left = half_crossing(&r, &rs, peak, amplitude / 2.0, s, -1, hw);
        let right = half_crossing(&r, &rs, peak, amplitude / 2.0, s, 1, hw);
        let width = (right - left) * dt;
        if !(width > 0.0) {
            continue;
        }
        let onset_index = run.start.min(peak - 1);
        let end_index = run.end.max(peak + 1);
        spikes.push(Spike {
            onset_index,
            peak_index: peak,
            end_index,
            peak_time: (peak as f64 + offset) * dt,
            amplitude,
            width,
            polarity: if s > 0.0 { Polarity::Positive } else { Polarity::Negative },
            unit: rec.unit,
        });
    }
    Ok(spikes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Train {
    pub spikes: Vec<Spike>,
    pub mean_width: f64,
    pub mean_amplitude: f64,
    pub mean_inter_spike_interval: f64,
}

impl Train {
    pub fn new(spikes: Vec<Spike>) -> Result<Self, SpikeError> {
        if spikes.len() < 2 {
            return Err(SpikeError::NotATrain);
        }
        let n = spikes.len() as f64;
        let mean_width = spikes.iter().map(|s| s.width).sum::<f64>() / n;
        let mean_amplitude = spikes.iter().map(|s| s.amplitude.abs()).sum::<f64>() / n;
        let mean_inter_spike_interval =
            (spikes[spikes.len() - 1].peak_time - spikes[0].peak_time) / (n - 1.0);
        Ok(Self {
            spikes,
            mean_width,
            mean_amplitude,
            mean_inter_spike_interval,
        })
    }
}

/// Greedy left-to-right grouping by peak-to-peak gap; singletons are
/// dropped.
pub fn group_trains(spikes: &[Spike], max_gap: f64) -> Vec<Train> {
    let mut trains = Vec::new();
    let mut current: Vec<Spike> = Vec::new();
    for s in spikes {
        if let Some(last) = current.last() {
            if s.peak_time - last.peak_time > max_gap {
                if let Ok(t) = Train::new(std::mem::take(&mut current)) {
                    trains.push(t);
                }
                current.clear();
            }
        }
        current.push(*s);
    }
    if let Ok(t) = Train::new(current) {
        trains.push(t);
    }
    trains
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainClass {
    LowFreqHighAmp,
    HighFreqLowAmp,
}

/// A train prototype: width and interval in seconds, amplitude in kΩ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainCentroid {
    pub width: f64,
    pub amplitude: f64,
    pub interval: f64,
}

pub const LOW_FREQ_HIGH_AMP: TrainCentroid = TrainCentroid {
    width: 28.0 * 60.0,
    amplitude: 1.6,
    interval: 57.0 * 60.0,
};

pub const HIGH_FREQ_LOW_AMP: TrainCentroid = TrainCentroid {
    width: 10.0 * 60.0,
    amplitude: 0.6,
    interval: 44.0 * 60.0,
};

pub fn classify_train(train: &Train) -> Result<TrainClass, SpikeError> {
    if train.spikes.iter().any(|s| s.unit != Unit::Kiloohms) {
        return Err(SpikeError::WrongUnit);
    }
    Ok(classify_train_against(train, &LOW_FREQ_HIGH_AMP, &HIGH_FREQ_LOW_AMP))
}

/// Nearest centroid with each axis divided by the centroids' midpoint.
/// Equidistant trains go to the low-frequency class.
pub fn classify_train_against(train: &Train, low: &TrainCentroid, high: &TrainCentroid) -> TrainClass {
    let point = [train.mean_width, train.mean_amplitude, train.mean_inter_spike_interval];
    let a = [low.width, low.amplitude, low.interval];
    let b = [high.width, high.amplitude, high.interval];
    let dist = |c: &[f64; 3]| -> f64 {
        (0..3)
            .map(|k| ((point[k] - c[k]) / (0.5 * (a[k] + b[k]))).powi(2))
            .sum()
    };
    let (da, db) = (dist(&a), dist(&b));
    if db < da && (da - db) > 1e-9 * (da + db) {
        TrainClass::HighFreqLowAmp
    } else {
        TrainClass::LowFreqHighAmp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub mean: f64,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

impl Summary {
    pub fn of(v: &[f64]) -> Option<Self> {
        (!v.is_empty()).then(|| Summary {
            median: median(v),
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

/// Statistics over detected spikes. Amplitudes are magnitudes; `None` marks
/// an empty set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeStats {
    pub count: usize,
    pub amplitude: Option<Summary>,
    pub duration: Option<Summary>,
    pub inter_spike_interval: Option<Summary>,
}

impl SpikeStats {
    pub fn of(spikes: &[Spike]) -> Self {
        let amps: Vec<f64> = spikes.iter().map(|s| s.amplitude.abs()).collect();
        let widths: Vec<f64> = spikes.iter().map(|s| s.width).collect();
        let gaps: Vec<f64> = spikes.windows(2).map(|w| w[1].peak_time - w[0].peak_time).collect();
        Self {
            count: spikes.len(),
            amplitude: Summary::of(&amps),
            duration: Summary::of(&widths),
            inter_spike_interval: Summary::of(&gaps),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusComparison {
    pub amplitude_ratio: f64,
    pub duration_ratio: f64,
    pub on_is_larger: bool,
}

/// Ratios of median amplitude magnitude and median width, ON over OFF.
pub fn compare_stimulus_responses(on: &[Spike], off: &[Spike]) -> Result<StimulusComparison, SpikeError> {
    let (Some(a), Some(b)) = (SpikeStats::of(on).amplitude, SpikeStats::of(off).amplitude) else {
        return Err(SpikeError::EmptyGroup(if on.is_empty() { "ON" } else { "OFF" }));
    };
    let (wa, wb) = (
        SpikeStats::of(on).duration.expect("non-empty"),
        SpikeStats::of(off).duration.expect("non-empty"),
    );
    let amplitude_ratio = a.median / b.median;
    let duration_ratio = wa.median / wb.median;
    Ok(StimulusComparison {
        amplitude_ratio,
        duration_ratio,
        on_is_larger: amplitude_ratio > 1.0 && duration_ratio > 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShiftParams {
    pub min_shift: f64,
    pub settle_fraction: f64,
    /// Running-median window applied before tracking the level, seconds.
    pub smooth_window: f64,
    /// How long a level change must persist to count, seconds.
    pub hold: f64,
}

impl Default for ShiftParams {
    fn default() -> Self {
        Self {
            min_shift: 0.3,
            settle_fraction: 0.95,
            smooth_window: 1000.0,
            hold: 2000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineShift {
    pub start_index: usize,
    /// Onset time in seconds, where the level leaves 5% of the shift.
    pub start: f64,
    pub shift_amplitude: f64,
    /// Onset to `settle_fraction` of the plateau, seconds.
    pub saturation_time: f64,
    /// Departure from the plateau to `settle_fraction` of the way back,
    /// if the level returns within the recording.
    pub relaxation_time: Option<f64>,
}

/// First and last crossings of `level` going in direction `sign`, averaged.
fn crossing_time(s: &[f64], from: usize, to: usize, level: f64, sign: f64) -> Option<f64> {
    let first = (from..to).find(|&k| sign * (s[k] - level) >= 0.0)?;
    let last = (from..to).rev().find(|&k| sign * (s[k] - level) < 0.0).map_or(first, |k| k + 1);
    Some(0.5 * (first + last.max(first)) as f64)
}

/// Fits `p(k) = 1 - exp(-(k - k0) / tau)` to the samples of `s[from..to]`
/// whose progress `p` lies in `[0.1, 0.9]`, by least squares on
/// `ln(1 - p)`. Returns `(k0, tau)` in samples.
fn first_order_fit(s: &[f64], from: usize, to: usize, progress: impl Fn(f64) -> f64) -> Option<(f64, f64)> {
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, &v) in s.iter().enumerate().take(to).skip(from) {
        let p = progress(v);
        if (0.1..=0.9).contains(&p) {
            let (x, y) = (k as f64, (1.0 - p).ln());
            n += 1.0;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
    }
    if n < 3.0 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    if !(slope < 0.0 && slope.is_finite()) {
        return None;
    }
    let intercept = (sy - slope * sx) / n;
    Some((-intercept / slope, -1.0 / slope))
}

/// Gauss-Newton refinement of [`first_order_fit`] on the raw samples of
/// `x[from..to]`, with `p = 0` before `k0`.
fn refine_first_order(
    x: &[f64],
    from: usize,
    to: usize,
    progress: impl Fn(f64) -> f64,
    (mut k0, mut tau): (f64, f64),
) -> (f64, f64) {
    let sse = |k0: f64, tau: f64| -> f64 {
        (from..to)
            .map(|k| {
                let u = k as f64 - k0;
                let model = if u > 0.0 { 1.0 - (-u / tau).exp() } else { 0.0 };
                (progress(x[k]) - model).powi(2)
            })
            .sum()
    };
    let mut best = sse(k0, tau);
    for _ in 0..50 {
        let (mut a, mut b, mut c, mut g0, mut g1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in from..to {
            let u = k as f64 - k0;
            if u <= 0.0 {
                continue;
            }
            let e = (-u / tau).exp();
            let r = progress(x[k]) - (1.0 - e);
            let (j0, j1) = (-e / tau, -u * e / (tau * tau));
            a += j0 * j0;
            b += j0 * j1;
            c += j1 * j1;
            g0 += j0 * r;
            g1 += j1 * r;
        }
        let det = a * c - b * b;
        if !(det.abs() > 0.0 && det.is_finite()) {
            break;
        }
        let (d0, d1) = ((c * g0 - b * g1) / det, (a * g1 - b * g0) / det);
        let mut scale = 1.0;
        let mut improved = false;
        while scale > 1e-4 {
            let (n0, n1) = (k0 + scale * d0, tau + scale * d1);
            if n1 > 0.0 {
                let v = sse(n0, n1);
                if v < best {
                    (k0, tau, best) = (n0, n1, v);
                    improved = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !improved || (scale * d1).abs() < 1e-9 * tau {
            break;
        }
    }
    (k0, tau)
}

/// Finds sustained level changes of at least `min_shift`.
///
/// Transitions are timed from a first-order fit, seeded on the 10-90% part
/// of the smoothed level and refined on the raw samples, so
/// onset, saturation and relaxation follow the fitted time constant rather
/// than single noisy crossings; the raw crossings are the fallback when the
/// fit is degenerate.
pub fn detect_baseline_shift(rec: &Recording, params: &ShiftParams) -> Result<Vec<BaselineShift>, SpikeError> {
    let half = half_window(rec, params.smooth_window)?;
    if !(params.min_shift > 0.0) || !(params.settle_fraction > 0.5 && params.settle_fraction < 1.0) {
        return Err(SpikeError::InvalidParams(
            "min_shift must be positive and settle_fraction in (0.5, 1)".into(),
        ));
    }
    let dt = rec.sample_interval;
    let s = running_median(&rec.samples, half, None);
    let n = s.len();
    let hold = ((params.hold / dt).ceil() as usize).max(1);
    let f = params.settle_fraction;
    let mid = 0.5 * params.min_shift;

    let mut shifts = Vec::new();
    let mut i = 0;
    while i + hold < n {
        let reference = median(&s[i..i + hold]);
        let Some(c) = (i..n).find(|&k| (s[k] - reference).abs() >= mid) else {
            break;
        };
        let g = (s[c] - reference).signum();
        let e = (c..n).find(|&k| g * (s[k] - reference) < mid).unwrap_or(n);
        if e - c < hold {
            i = e;
            continue;
        }
        let tail = |d: usize| median(&s[c + (d - c) * 2 / 3..d]);
        let p1 = tail(e);
        let d = (c..e)
            .rev()
            .find(|&k| (s[k] - p1).abs() <= 0.05 * (p1 - reference).abs())
            .map_or(e, |k| k + 1);
        let plateau = if d - c >= 3 { tail(d) } else { p1 };
        let amp = plateau - reference;
        if amp.abs() < params.min_shift {
            i = e;
            continue;
        }
        let settle = (0.95 / (1.0 - f)).ln();
        let x = &rec.samples;
        let rise = first_order_fit(&s, i, d, |v| (v - reference) / amp)
            .map(|init| refine_first_order(x, i, d, |v| (v - reference) / amp, init));
        let (onset, saturation_time) = match rise {
            Some((t0, tau)) => {
                let k = (t0 + tau * (1.0 / 0.95f64).ln()).round().clamp(i as f64, c as f64) as usize;
                (k, tau * settle * dt)
            }
            None => {
                let onset = (i..=c)
                    .rev()
                    .find(|&k| (s[k] - reference).abs() <= 0.05 * amp.abs())
                    .unwrap_or(i);
                let sat = crossing_time(&s, onset, d.max(onset + 1), reference + f * amp, g)
                    .unwrap_or(d as f64);
                (onset, (sat - onset as f64) * dt)
            }
        };
        let mut next = e;
        let relaxation_time = if e < n {
            let back = reference + (1.0 - f) * amp;
            (e..n).find(|&k| g * (s[k] - back) <= 0.0).map(|k| {
                let to = (k + hold).min(n);
                next = k;
                let decay = |v: f64| (plateau - v) / amp;
                let fit = first_order_fit(&s, d - 1, to, decay)
                    .map(|init| refine_first_order(x, d - 1, to, decay, init));
                match fit {
                    Some((_, tau)) => tau * settle * dt,
                    None => {
                        let t = crossing_time(&s, d, to, back, -g).unwrap_or(k as f64);
                        (t - (d - 1) as f64) * dt
                    }
                }
            })
        } else {
            None
        };
        shifts.push(BaselineShift {
            start_index: onset,
            start: onset as f64 * dt,
            shift_amplitude: amp,
            saturation_time,
            relaxation_time,
        });
        if e == n {
            break;
        }
        i = next;
    }
    Ok(shifts)
}

/// Building blocks for synthetic recordings. Times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Event {
    /// Gaussian bump with the given full width at half maximum.
    Bell { center: f64, amplitude: f64, fwhm: f64 },
    /// Exponential approach to `amplitude` from `start`; with `end`, an
    /// exponential return to zero with `tau_off` (defaults to `tau`).
    Step {
        start: f64,
        amplitude: f64,
        tau: f64,
        #[serde(default)]
        end: Option<f64>,
        #[serde(default)]
        tau_off: Option<f64>,
    },
    /// `count` bells spaced by `interval`, the first at `start`.
    Train {
        start: f64,
        count: usize,
        interval: f64,
        amplitude: f64,
        fwhm: f64,
    },
}

impl Event {
    fn value(&self, t: f64) -> f64 {
        let bell = |center: f64, amplitude: f64, fwhm: f64| {
            let u = (t - center) / fwhm;
            amplitude * (-4.0 * std::f64::consts::LN_2 * u * u).exp()
        };
        let rise = |dt: f64, tau: f64| if tau > 0.0 { 1.0 - (-dt / tau).exp() } else { 1.0 };
        match *self {
            Event::Bell { center, amplitude, fwhm } => bell(center, amplitude, fwhm),
            Event::Train {
                start,
                count,
                interval,
                amplitude,
                fwhm,
            } => (0..count)
                .map(|k| bell(start + k as f64 * interval, amplitude, fwhm))
                .sum(),
            Event::Step {
                start,
                amplitude,
                tau,
                end,
                tau_off,
            } => {
                if t < start {
                    0.0
                } else if end.is_none_or(|e| t < e) {
                    amplitude * rise(t - start, tau)
                } else {
                    let e = end.expect("checked");
                    let level = amplitude * rise(e - start, tau);
                    level * (1.0 - rise(t - e, tau_off.unwrap_or(tau)))
                }
            }
        }
    }

    fn validate(&self) -> Result<(), SpikeError> {
        let bad = |m: &str| Err(SpikeError::InvalidParams(m.to_string()));
        match *self {
            Event::Bell { center, amplitude, fwhm } => {
                if !(center.is_finite() && amplitude.is_finite() && fwhm > 0.0) {
                    return bad("bell needs finite center/amplitude and positive fwhm");
                }
            }
            Event::Train {
                start,
                count,
                interval,
                amplitude,
                fwhm,
            } => {
                if !(start.is_finite() && count > 0 && interval > 0.0 && amplitude.is_finite() && fwhm > 0.0) {
                    return bad("train needs count > 0 and positive interval and fwhm");
                }
            }
            Event::Step {
                start,
                amplitude,
                tau,
                end,
                tau_off,
            } => {
                if !(start.is_finite() && amplitude.is_finite() && tau >= 0.0) {
                    return bad("step needs finite start/amplitude and tau >= 0");
                }
                if end.is_some_and(|e| !(e > start)) || tau_off.is_some_and(|t| !(t >= 0.0)) {
                    return bad("step end must follow start and tau_off must be >= 0");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub duration: f64,
    pub sample_interval: f64,
    pub unit: Unit,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

pub fn synthesize_recording(spec: &SynthSpec) -> Result<Recording, SpikeError> {
    if !(spec.duration > 0.0 && spec.sample_interval > 0.0 && spec.duration.is_finite()) {
        return Err(SpikeError::InvalidParams("duration and sample_interval must be positive".into()));
    }
    if !(spec.noise_sd >= 0.0 && spec.noise_sd.is_finite()) {
        return Err(SpikeError::InvalidParams("noise_sd must be non-negative".into()));
    }
    let mut steps = Vec::new();
    for e in &spec.events {
        e.validate()?;
        let start = match e {
            Event::Bell { center, .. } => *center,
            Event::Train { start, .. } => *start,
            Event::Step { start, end, .. } => {
                steps.push((*start, end.unwrap_or(f64::INFINITY)));
                *start
            }
        };
        if !(0.0..=spec.duration).contains(&start) {
            return Err(SpikeError::InvalidParams(format!("event at {start} s lies outside the recording")));
        }
    }
    steps.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in steps.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(SpikeError::OverlappingSteps(w[0].0, w[1].0));
        }
    }

    let n = (spec.duration / spec.sample_interval * (1.0 + 1e-12)).floor() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sd)
        .map_err(|e| SpikeError::InvalidParams(e.to_string()))?;
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 * spec.sample_interval;
            let clean: f64 = spec.events.iter().map(|e| e.value(t)).sum();
            if spec.noise_sd > 0.0 {
                clean + noise.sample(&mut rng)
            } else {
                clean
            }
        })
        .collect();
    Recording::new(spec.sample_interval, samples, spec.unit)
}
