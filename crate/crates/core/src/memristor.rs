//! Linear-drift memristor with a polynomial window, and a cyclic
//! voltammetry driver for pinched-hysteresis checks.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemristorError {
    #[error("invalid memristor model: {0}")]
    InvalidModel(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("curve has no zero crossing of the voltage")]
    NoZeroCrossing,
}

/// State-dependent Ohm's law: `R(w) = r_on * w + r_off * (1 - w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemristorModel {
    pub r_on: f64,
    pub r_off: f64,
    /// Internal state in `[0, 1]`.
    pub w: f64,
    /// State mobility, state units per coulomb.
    pub mu: f64,
    /// Window exponent `p` of `f(w) = 1 - (2w - 1)^(2p)`.
    pub window_p: u32,
}

impl Default for MemristorModel {
    fn default() -> Self {
        Self {
            r_on: 1e3,
            r_off: 1e4,
            w: 0.1,
            mu: 1e4,
            window_p: 1,
        }
    }
}

impl MemristorModel {
    /// `r_on == r_off` is accepted and degenerates to a plain resistor.
    pub fn validate(&self) -> Result<(), MemristorError> {
        let bad = |m: &str| Err(MemristorError::InvalidModel(m.to_string()));
        if !(self.r_on.is_finite() && self.r_off.is_finite() && self.r_on > 0.0) {
            return bad("resistances must be finite and positive");
        }
        if self.r_on > self.r_off {
            return bad("r_on must not exceed r_off");
        }
        if !(0.0..=1.0).contains(&self.w) {
            return bad("state w must lie in [0, 1]");
        }
        if !self.mu.is_finite() {
            return bad("mu must be finite");
        }
        if self.window_p == 0 {
            return bad("window_p must be a positive integer");
        }
        Ok(())
    }

    pub fn resistance(&self) -> f64 {
        self.r_on * self.w + self.r_off * (1.0 - self.w)
    }

    pub fn conductance(&self) -> f64 {
        1.0 / self.resistance()
    }

    pub fn window(&self) -> f64 {
        1.0 - (2.0 * self.w - 1.0).powi(2 * self.window_p as i32)
    }

    /// Current through the device at branch voltage `v`.
    pub fn current(&self, v: f64) -> f64 {
        v / self.resistance()
    }

    /// One explicit state update under branch voltage `v_branch` held for
    /// `dt`. Returns the updated model and the current that drove it.
    pub fn step_state(&self, v_branch: f64, dt: f64) -> (MemristorModel, f64) {
        debug_assert!(dt > 0.0);
        let i = self.current(v_branch);
        let w = (self.w + self.mu * i * self.window() * dt).clamp(0.0, 1.0);
        (MemristorModel { w, ..*self }, i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvSample {
    pub t: f64,
    pub v: f64,
    pub i: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvCurve {
    pub samples: Vec<IvSample>,
}

impl IvCurve {
    pub fn max_abs_current(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.i.abs()))
    }

    pub fn max_abs_voltage(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.v.abs()))
    }

    /// `t,v,i` CSV with shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,v,i\n");
        for p in &self.samples {
            let _ = writeln!(s, "{},{},{}", p.t, p.v, p.i);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvSweep {
    /// Peak drive voltage; the sweep covers `[-v_peak, v_peak]`.
    pub v_peak: f64,
    /// Sweep rate in volts per second.
    pub sweep_rate: f64,
    pub cycles: u32,
    /// Integration step in seconds.
    pub dt: f64,
}

impl Default for CvSweep {
    fn default() -> Self {
        Self {
            v_peak: 0.5,
            sweep_rate: 1.0,
            cycles: 1,
            dt: 1e-3,
        }
    }
}

impl CvSweep {
    pub fn period(&self) -> f64 {
        4.0 * self.v_peak / self.sweep_rate
    }

    /// Triangular drive `0 → +v_peak → -v_peak → 0`, repeating each period.
    pub fn voltage(&self, t: f64) -> f64 {
        let period = self.period();
        let phase = (t / period).fract() * 4.0;
        let v = if phase < 1.0 {
            phase
        } else if phase < 3.0 {
            2.0 - phase
        } else {
            phase - 4.0
        };
        v * self.v_peak
    }
}

/// Drives the model with a triangular voltage and records the I–V trajectory.
///
/// Each step evaluates the drive at the step start, records the resulting
/// current, then advances the state explicitly.
pub fn cv_sweep(model: &MemristorModel, sweep: &CvSweep) -> Result<IvCurve, MemristorError> {
    model.validate()?;
    let bad = |m: &str| Err(MemristorError::InvalidSweep(m.to_string()));
    if !(sweep.v_peak > 0.0 && sweep.v_peak.is_finite()) {
        return bad("v_peak must be positive");
    }
    if !(sweep.sweep_rate > 0.0 && sweep.sweep_rate.is_finite()) {
        return bad("sweep_rate must be positive");
    }
    if sweep.cycles == 0 {
        return bad("at least one cycle is required");
    }
    if !(sweep.dt > 0.0) {
        return bad("dt must be positive");
    }
    let total = sweep.period() * sweep.cycles as f64;
    let steps = (total / sweep.dt).round() as u64;
    if steps < 8 {
        return bad("dt too coarse for the sweep period");
    }
    if steps > 100_000_000 {
        return bad("too many steps");
    }

    let mut m = *model;
    let mut samples = Vec::with_capacity(steps as usize + 1);
    for k in 0..=steps {
        let t = k as f64 * sweep.dt;
        let v = sweep.voltage(t);
        let (next, i) = m.step_state(v, sweep.dt);
        samples.push(IvSample { t, v, i });
        m = next;
    }
    Ok(IvCurve { samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopMetrics {
    /// Largest |I| interpolated at the zero crossings of V.
    pub pinch_current: f64,
    /// Total enclosed area, summed over the lobes between zero crossings.
    pub lobe_area: f64,
}

/// Pinch current and lobe area of an I–V trajectory.
///
/// The trajectory is split at the zero crossings of V. Each piece starts and
/// ends on `V = 0`, so its `∫ I dV` is the signed area of one lobe; the lobe
/// magnitudes are summed. (The lobes of a pinched loop circulate in opposite
/// senses, so a single closed-path integral would cancel them.)
pub fn loop_metrics(curve: &IvCurve) -> Result<LoopMetrics, MemristorError> {
    let s = &curve.samples;
    let mut crossings: Vec<(usize, f64, f64)> = Vec::new(); // (segment, fraction, current)
    for k in 0..s.len().saturating_sub(1) {
        let (a, b) = (&s[k], &s[k + 1]);
        if a.v == 0.0 {
            crossings.push((k, 0.0, a.i));
        } else if a.v * b.v < 0.0 {
            let f = a.v / (a.v - b.v);
            crossings.push((k, f, a.i + f * (b.i - a.i)));
        }
    }
    if let Some(last) = s.last() {
        if last.v == 0.0 && s.len() > 1 {
            crossings.push((s.len() - 1, 0.0, last.i));
        }
    }
    if crossings.is_empty() {
        return Err(MemristorError::NoZeroCrossing);
    }
    let pinch_current = crossings.iter().fold(0.0f64, |m, c| m.max(c.2.abs()));

    // Walk the polyline once, splitting trapezoids at the crossing points.
    let point_at = |k: usize, f: f64| -> (f64, f64) {
        if f == 0.0 || k + 1 >= s.len() {
            (s[k].v, s[k].i)
        } else {
            (
                s[k].v + f * (s[k + 1].v - s[k].v),
                s[k].i + f * (s[k + 1].i - s[k].i),
            )
        }
    };
    // A trace that stops short of zero still closes its last lobe at the
    // final sample.
    let mut bounds = crossings.clone();
    let end = s.len() - 1;
    if bounds.last().is_some_and(|&(k, _, _)| k < end) {
        bounds.push((end, 0.0, s[end].i));
    }
    let mut lobe_area = 0.0;
    for pair in bounds.windows(2) {
        let (k0, f0, _) = pair[0];
        let (k1, f1, _) = pair[1];
        let mut pts = vec![point_at(k0, f0)];
        for k in (k0 + 1)..=k1 {
            pts.push((s[k].v, s[k].i));
        }
        if f1 > 0.0 {
            pts.push(point_at(k1, f1));
        }
        let signed: f64 = pts
            .windows(2)
            .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
            .sum();
        lobe_area += signed.abs();
    }
    Ok(LoopMetrics {
        pinch_current,
        lobe_area,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn synthetic(n: usize, f: impl Fn(f64) -> (f64, f64)) -> IvCurve {
        IvCurve {
            samples: (0..=n)
                .map(|k| {
                    let phase = 2.0 * PI * k as f64 / n as f64;
                    let (v, i) = f(phase);
                    IvSample { t: k as f64, v, i }
                })
                .collect(),
        }
    }

    #[test]
    fn zero_drive_leaves_state() {
        let m = MemristorModel::default();
        let (next, i) = m.step_state(0.0, 1e-3);
        assert_eq!(i, 0.0);
        assert_eq!(next.w, m.w);
    }

    #[test]
    fn window_is_maximal_at_midpoint() {
        let m = MemristorModel {
            w: 0.5,
            window_p: 1,
            ..Default::default()
        };
        assert_eq!(m.window(), 1.0);
        assert_eq!(MemristorModel { w: 0.0, ..m }.window(), 0.0);
        assert_eq!(MemristorModel { w: 1.0, ..m }.window(), 0.0);
    }

    #[test]
    fn equal_resistances_act_as_resistor() {
        let m = MemristorModel {
            r_on: 5e3,
            r_off: 5e3,
            ..Default::default()
        };
        for w in [0.0, 0.3, 1.0] {
            assert_eq!(MemristorModel { w, ..m }.current(0.5), 0.5 / 5e3);
        }
    }

    #[test]
    fn validation() {
        let base = MemristorModel::default();
        assert!(base.validate().is_ok());
        assert!(MemristorModel { r_on: 2e4, ..base }.validate().is_err());
        assert!(MemristorModel { w: 1.2, ..base }.validate().is_err());
        assert!(MemristorModel { window_p: 0, ..base }.validate().is_err());
        assert!(cv_sweep(&base, &CvSweep { cycles: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn triangular_drive_shape() {
        let s = CvSweep::default();
        assert_eq!(s.voltage(0.0), 0.0);
        assert!((s.voltage(0.5) - 0.5).abs() < 1e-12);
        assert!((s.voltage(1.0)).abs() < 1e-12);
        assert!((s.voltage(1.5) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn straight_line_has_no_loop() {
        let c = synthetic(1000, |p| (p.sin(), 2e-3 * p.sin()));
        let m = loop_metrics(&c).unwrap();
        assert!(m.pinch_current < 1e-15);
        assert!(m.lobe_area < 1e-15);
    }

    #[test]
    fn figure_eight_area_matches_closed_form() {
        // V = sin φ, I = V (1 + cos φ / 2). Each lobe encloses
        // ∫ sin φ (1 + cos φ / 2) cos φ dφ over a half period = ±1/3.
        let c = synthetic(20_000, |p| (p.sin(), p.sin() * (1.0 + 0.5 * p.cos())));
        let m = loop_metrics(&c).unwrap();
        assert!((m.lobe_area - 2.0 / 3.0).abs() < 1e-6, "{}", m.lobe_area);
        assert!(m.pinch_current < 1e-12);
    }

    #[test]
    fn no_crossing_is_an_error() {
        let c = IvCurve {
            samples: (0..10)
                .map(|k| IvSample {
                    t: k as f64,
                    v: 1.0 + k as f64,
                    i: 1.0,
                })
                .collect(),
        };
        assert_eq!(loop_metrics(&c), Err(MemristorError::NoZeroCrossing));
    }

    #[test]
    fn default_sweep_is_pinched() {
        let c = cv_sweep(&MemristorModel::default(), &CvSweep::default()).unwrap();
        let m = loop_metrics(&c).unwrap();
        assert!(m.pinch_current <= 0.01 * c.max_abs_current());
        assert!(m.lobe_area > 0.0);
    }

    #[test]
    fn fast_sweeps_shrink_the_loop() {
        let model = MemristorModel::default();
        let rel_area = |rate: f64| {
            let sweep = CvSweep {
                sweep_rate: rate,
                dt: CvSweep::default().period() / rate / 4000.0,
                ..Default::default()
            };
            let c = cv_sweep(&model, &sweep).unwrap();
            loop_metrics(&c).unwrap().lobe_area / (c.max_abs_current() * c.max_abs_voltage())
        };
        let slow = rel_area(1.0);
        let fast = rel_area(100.0);
        let faster = rel_area(10_000.0);
        assert!(fast < slow && faster < fast, "{slow} {fast} {faster}");
        assert!(faster < 0.01 * slow);
    }

    #[test]
    fn state_update_converges_first_order() {
        let model = MemristorModel::default();
        let final_w = |dt: f64| {
            let sweep = CvSweep {
                dt,
                ..Default::default()
            };
            let mut m = model;
            let steps = (sweep.period() / dt).round() as u64;
            for k in 0..steps {
                m = m.step_state(sweep.voltage(k as f64 * dt), dt).0;
            }
            m.w
        };
        let (a, b, c) = (final_w(4e-3), final_w(2e-3), final_w(1e-3));
        let ratio = (a - b).abs() / (b - c).abs();
        assert!((1.5..3.0).contains(&ratio), "convergence ratio {ratio}");
    }

    proptest! {
        #[test]
        fn state_stays_in_unit_interval(
            drive in proptest::collection::vec(-50.0f64..50.0, 1..200),
            w0 in 0.0f64..=1.0, p in 1u32..4, mu in 0.0f64..1e7,
        ) {
            let mut m = MemristorModel { w: w0, window_p: p, mu, ..Default::default() };
            for v in drive {
                m = m.step_state(v, 1e-2).0;
                prop_assert!((0.0..=1.0).contains(&m.w));
                prop_assert!(m.resistance() >= m.r_on && m.resistance() <= m.r_off);
            }
        }
    }
}
