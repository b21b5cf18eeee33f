//! Transient and DC analysis of netlists by modified nodal analysis.
//!
//! Unknowns are the non-ground node voltages followed by one branch current
//! per voltage source. Capacitors enter through companion models
//! (conductance plus history current); memristors are stamped as the
//! conductance of their current state, which is advanced explicitly once
//! per step from the previous step's branch voltage.

pub mod sparse;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{CircuitError, Element, Netlist, GROUND};
use crate::memristor::MemristorModel;
use sparse::{min_degree_order, SparseLu, Triplets};

pub const MAX_STEPS: u64 = 100_000_000;

/// Backward Euler substeps making up the first trapezoidal step.
pub const STARTUP_SUBSTEPS: u32 = 20;

/// An MNA unknown, used to name the location of a numerical failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unknown {
    Node(usize),
    /// Branch current of the k-th voltage source.
    SourceCurrent(usize),
}

impl std::fmt::Display for Unknown {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Unknown::Node(n) => write!(f, "node {n}"),
            Unknown::SourceCurrent(k) => write!(f, "current of source {k}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("singular system matrix at pivot {0}")]
    Singular(Unknown),
    #[error("{steps} time steps exceed the limit of {MAX_STEPS}")]
    StepOverflow { steps: f64 },
    #[error("non-finite value at t = {time:e} s")]
    NonFinite { time: f64 },
    #[error("invalid transient config: {0}")]
    InvalidConfig(String),
    #[error("invalid pulse: {0}")]
    InvalidPulse(String),
    #[error("invalid source on node {0}")]
    InvalidSource(usize),
    #[error(transparent)]
    Netlist(#[from] CircuitError),
}

/// Trapezoidal-style pulse: 0 until `delay`, linear `rise` to `amplitude`,
/// flat for `width`, linear `fall` back to 0. `period == 0` means a single
/// pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSpec {
    pub amplitude: f64,
    pub delay: f64,
    pub rise: f64,
    pub fall: f64,
    pub width: f64,
    pub period: f64,
}

impl Default for PulseSpec {
    fn default() -> Self {
        Self {
            amplitude: 0.06,
            delay: 1e-6,
            rise: 1e-7,
            fall: 1e-7,
            width: 5e-5,
            period: 0.0,
        }
    }
}

impl PulseSpec {
    /// A step of `amplitude` at `t = 0` that stays on.
    pub fn step(amplitude: f64) -> Self {
        Self {
            amplitude,
            delay: 0.0,
            rise: 0.0,
            fall: 0.0,
            width: f64::MAX,
            period: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidPulse(m.to_string()));
        if !self.amplitude.is_finite() {
            return bad("amplitude must be finite");
        }
        for t in [self.delay, self.rise, self.fall, self.period] {
            if !(t.is_finite() && t >= 0.0) {
                return bad("times must be finite and non-negative");
            }
        }
        if !(self.width > 0.0) {
            return bad("width must be positive");
        }
        if self.period > 0.0 && self.period < self.rise + self.width + self.fall {
            return bad("period shorter than one pulse");
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        let mut tt = t - self.delay;
        if tt < 0.0 {
            return 0.0;
        }
        if self.period > 0.0 {
            tt %= self.period;
        }
        if tt < self.rise {
            self.amplitude * tt / self.rise
        } else if tt - self.rise < self.width {
            self.amplitude
        } else if tt - self.rise - self.width < self.fall {
            self.amplitude * (1.0 - (tt - self.rise - self.width) / self.fall)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Trapezoidal,
    BackwardEuler,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "trapezoidal" | "trap" => Ok(Method::Trapezoidal),
            "backward-euler" | "be" | "euler" => Ok(Method::BackwardEuler),
            _ => Err(format!(
                "unknown method `{s}`; expected trapezoidal or backward-euler"
            )),
        }
    }
}

/// Fixed-step transient settings.
///
/// The default uses backward Euler: at the default step, every edge time
/// constant of a default-valued colony is far shorter than `dt`, a regime
/// where the trapezoidal rule rings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransientConfig {
    pub t_stop: f64,
    pub dt: f64,
    pub method: Method,
}

impl Default for TransientConfig {
    fn default() -> Self {
        Self {
            t_stop: 2e-4,
            dt: 5e-8,
            method: Method::BackwardEuler,
        }
    }
}

impl TransientConfig {
    pub fn steps(&self) -> Result<u64, SolverError> {
        if !(self.dt.is_finite() && self.t_stop.is_finite() && self.dt > 0.0) {
            return Err(SolverError::InvalidConfig("dt and t_stop must be positive".into()));
        }
        if self.dt > self.t_stop {
            return Err(SolverError::InvalidConfig("dt exceeds t_stop".into()));
        }
        let steps = (self.t_stop / self.dt * (1.0 - 1e-12)).ceil();
        if steps > MAX_STEPS as f64 {
            return Err(SolverError::StepOverflow { steps });
        }
        Ok(steps as u64)
    }
}

/// Node voltage histories on a uniform time grid starting at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientResult {
    pub times: Vec<f64>,
    /// `node_voltages[node][step]`; node 0 is ground.
    pub node_voltages: Vec<Vec<f64>>,
}

impl TransientResult {
    pub fn voltage(&self, node: usize) -> &[f64] {
        &self.node_voltages[node]
    }

    pub fn peak_abs(&self, node: usize) -> f64 {
        self.node_voltages[node]
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `t,<node>,...` CSV, restricted to `probes` when given.
    pub fn to_csv(&self, probes: Option<&[usize]>) -> String {
        let all: Vec<usize> = (0..self.node_voltages.len()).collect();
        let cols = probes.unwrap_or(&all);
        let mut s = String::from("t");
        for c in cols {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            let _ = write!(s, "{t}");
            for &c in cols {
                let _ = write!(s, ",{}", self.node_voltages[c][k]);
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone)]
struct CapState {
    a: usize,
    b: usize,
    farads: f64,
    v_prev: f64,
    i_prev: f64,
}

#[derive(Debug, Clone)]
struct MemState {
    a: usize,
    b: usize,
    model: MemristorModel,
}

/// Row/column of node `n` in the MNA system, `None` for ground.
fn row(n: usize) -> Option<usize> {
    (n != GROUND).then(|| n - 1)
}

fn stamp_conductance(m: &mut Triplets, a: usize, b: usize, g: f64) {
    let (ra, rb) = (row(a), row(b));
    if let Some(i) = ra {
        m.add(i, i, g);
    }
    if let Some(j) = rb {
        m.add(j, j, g);
    }
    if let (Some(i), Some(j)) = (ra, rb) {
        m.add(i, j, -g);
        m.add(j, i, -g);
    }
}

/// Static part of an MNA system: resistive stamps, leaks and source
/// incidence.
struct MnaLayout {
    node_count: usize,
    base: Triplets,
    caps: Vec<CapState>,
    mems: Vec<MemState>,
    sources: Vec<(usize, PulseSpec)>,
    order: Vec<usize>,
}

impl MnaLayout {
    fn new(netlist: &Netlist, extra: &[(usize, PulseSpec)]) -> Result<Self, SolverError> {
        let driven: Vec<usize> = extra.iter().map(|&(node, _)| node).collect();
        netlist.validate_driven(&driven)?;
        let n = netlist.node_count;
        let mut sources: Vec<(usize, PulseSpec)> = Vec::new();
        let mut caps = Vec::new();
        let mut mems = Vec::new();
        let mut resistors = Vec::new();
        for e in &netlist.elements {
            match *e {
                Element::Resistor { a, b, ohms } => resistors.push((a, b, 1.0 / ohms)),
                Element::Capacitor { a, b, farads } => caps.push(CapState {
                    a,
                    b,
                    farads,
                    v_prev: 0.0,
                    i_prev: 0.0,
                }),
                Element::Memristor { a, b, model } => mems.push(MemState { a, b, model }),
                Element::Pulse { node, pulse } => sources.push((node, pulse)),
            }
        }
        for &(node, pulse) in extra {
            if node == GROUND || node >= n {
                return Err(SolverError::InvalidSource(node));
            }
            pulse.validate()?;
            sources.push((node, pulse));
        }

        let dim = n - 1 + sources.len();
        let mut base = Triplets::new(dim);
        for &(a, b, g) in &resistors {
            stamp_conductance(&mut base, a, b, g);
        }
        if netlist.gmin > 0.0 {
            for k in 0..n - 1 {
                base.add(k, k, netlist.gmin);
            }
        }
        let mut partner = vec![None; dim];
        for (j, &(node, _)) in sources.iter().enumerate() {
            let s = n - 1 + j;
            let r = row(node).expect("source node is not ground");
            base.add(r, s, 1.0);
            base.add(s, r, 1.0);
            partner[s] = Some(r);
        }
        // the pattern must include capacitor and memristor couplings
        let mut pattern = base.clone();
        for c in &caps {
            stamp_conductance(&mut pattern, c.a, c.b, 1.0);
        }
        for m in &mems {
            stamp_conductance(&mut pattern, m.a, m.b, 1.0);
        }
        let order = min_degree_order(&pattern, &partner);
        Ok(Self {
            node_count: n,
            base,
            caps,
            mems,
            sources,
            order,
        })
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn unknown(&self, var: usize) -> Unknown {
        if var < self.node_count - 1 {
            Unknown::Node(var + 1)
        } else {
            Unknown::SourceCurrent(var + 1 - self.node_count)
        }
    }

    /// Factors the base matrix plus the given per-capacitor conductance
    /// factor (`C · cap_scale`) and current memristor conductances.
    fn factor(&self, cap_scale: f64) -> Result<SparseLu, SolverError> {
        let mut m = self.base.clone();
        if cap_scale > 0.0 {
            for c in &self.caps {
                stamp_conductance(&mut m, c.a, c.b, c.farads * cap_scale);
            }
        }
        for mem in &self.mems {
            stamp_conductance(&mut m, mem.a, mem.b, mem.model.conductance());
        }
        SparseLu::factor(&m, &self.order).map_err(|z| SolverError::Singular(self.unknown(z.variable)))
    }
}

/// Step-by-step transient simulation. Each call to [`TransientRun::advance`]
/// moves one `dt` forward; node voltages of the latest step are read with
/// [`TransientRun::voltage`].
pub struct TransientRun {
    layout: MnaLayout,
    config: TransientConfig,
    steps: u64,
    step: u64,
    lu: Option<SparseLu>,
    /// Capacitor scale `lu` was factored with.
    lu_scale: Option<f64>,
    x: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
}

impl TransientRun {
    /// Zero initial state: all capacitor voltages and history currents are
    /// zero and memristors start from their model state.
    pub fn new(
        netlist: &Netlist,
        sources: &[(usize, PulseSpec)],
        config: &TransientConfig,
    ) -> Result<Self, SolverError> {
        let steps = config.steps()?;
        let layout = MnaLayout::new(netlist, sources)?;
        let dim = layout.dim();
        Ok(Self {
            layout,
            config: *config,
            steps,
            step: 0,
            lu: None,
            lu_scale: None,
            x: vec![0.0; dim],
            rhs: vec![0.0; dim],
            scratch: Vec::with_capacity(dim),
        })
    }

    pub fn total_steps(&self) -> u64 {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dt
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.steps
    }

    pub fn voltage(&self, node: usize) -> f64 {
        row(node).map_or(0.0, |r| self.x[r])
    }

    fn branch_voltage(x: &[f64], a: usize, b: usize) -> f64 {
        row(a).map_or(0.0, |r| x[r]) - row(b).map_or(0.0, |r| x[r])
    }

    /// Advances one step. The first step of a trapezoidal run is taken as
    /// [`STARTUP_SUBSTEPS`] backward Euler substeps so that a source
    /// discontinuous at `t = 0` does not seed the trapezoidal history with an
    /// inconsistent current.
    pub fn advance(&mut self) -> Result<(), SolverError> {
        let dt = self.config.dt;
        let t_next = (self.step + 1) as f64 * dt;
        if self.step == 0 && self.config.method == Method::Trapezoidal {
            let h = dt / STARTUP_SUBSTEPS as f64;
            for k in 1..STARTUP_SUBSTEPS {
                self.solve_step(h, Method::BackwardEuler, k as f64 * h)?;
            }
            self.solve_step(h, Method::BackwardEuler, t_next)?;
        } else {
            self.solve_step(dt, self.config.method, t_next)?;
        }
        self.step += 1;
        Ok(())
    }

    fn solve_step(&mut self, dt: f64, method: Method, t: f64) -> Result<(), SolverError> {
        let cap_scale = match method {
            Method::BackwardEuler => 1.0 / dt,
            Method::Trapezoidal => 2.0 / dt,
        };

        let nonlinear = !self.layout.mems.is_empty();
        if nonlinear {
            for m in &mut self.layout.mems {
                let v = Self::branch_voltage(&self.x, m.a, m.b);
                m.model = m.model.step_state(v, dt).0;
            }
        }
        if nonlinear || self.lu_scale != Some(cap_scale) {
            self.lu = Some(self.layout.factor(cap_scale)?);
            self.lu_scale = Some(cap_scale);
        }

        self.rhs.iter_mut().for_each(|r| *r = 0.0);
        for c in &self.layout.caps {
            let geq = c.farads * cap_scale;
            let ieq = match method {
                Method::BackwardEuler => geq * c.v_prev,
                Method::Trapezoidal => geq * c.v_prev + c.i_prev,
            };
            if let Some(r) = row(c.a) {
                self.rhs[r] += ieq;
            }
            if let Some(r) = row(c.b) {
                self.rhs[r] -= ieq;
            }
        }
        let first_source = self.layout.node_count - 1;
        for (j, (_, pulse)) in self.layout.sources.iter().enumerate() {
            self.rhs[first_source + j] = pulse.value(t);
        }

        let lu = self.lu.as_ref().expect("factored above");
        lu.solve_into(&self.rhs, &mut self.x, &mut self.scratch);
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite { time: t });
        }

        for c in &mut self.layout.caps {
            let v = Self::branch_voltage(&self.x, c.a, c.b);
            let geq = c.farads * cap_scale;
            c.i_prev = match method {
                Method::BackwardEuler => geq * (v - c.v_prev),
                Method::Trapezoidal => geq * (v - c.v_prev) - c.i_prev,
            };
            c.v_prev = v;
        }
        Ok(())
    }
}

/// Full transient simulation recording every node at every step.
pub fn simulate(
    netlist: &Netlist,
    sources: &[(usize, PulseSpec)],
    config: &TransientConfig,
) -> Result<TransientResult, SolverError> {
    let mut run = TransientRun::new(netlist, sources, config)?;
    let n = netlist.node_count;
    let len = run.total_steps() as usize + 1;
    let mut times = Vec::with_capacity(len);
    let mut node_voltages = vec![Vec::with_capacity(len); n];
    times.push(0.0);
    for v in &mut node_voltages {
        v.push(0.0);
    }
    while !run.is_done() {
        run.advance()?;
        times.push(run.time());
        for (node, v) in node_voltages.iter_mut().enumerate() {
            v.push(run.voltage(node));
        }
    }
    Ok(TransientResult {
        times,
        node_voltages,
    })
}

/// Peak |V| at `probe` over the whole transient, without storing history.
pub fn simulate_peak(
    netlist: &Netlist,
    sources: &[(usize, PulseSpec)],
    config: &TransientConfig,
    probe: usize,
) -> Result<f64, SolverError> {
    if probe >= netlist.node_count {
        return Err(SolverError::InvalidSource(probe));
    }
    let mut run = TransientRun::new(netlist, sources, config)?;
    let mut peak = 0.0f64;
    while !run.is_done() {
        run.advance()?;
        peak = peak.max(run.voltage(probe).abs());
    }
    Ok(peak)
}

/// Resistive operating point with capacitors open. Sources listed in
/// `sources` are held at the given voltages; pulse sources embedded in the
/// netlist are held at their amplitude.
pub fn dc_operating_point(
    netlist: &Netlist,
    sources: &[(usize, f64)],
) -> Result<Vec<f64>, SolverError> {
    let as_pulses: Vec<(usize, PulseSpec)> = sources
        .iter()
        .map(|&(node, v)| (node, PulseSpec::step(v)))
        .collect();
    let layout = MnaLayout::new(netlist, &as_pulses)?;
    let lu = layout.factor(0.0)?;
    let mut rhs = vec![0.0; layout.dim()];
    let first_source = layout.node_count - 1;
    for (j, (_, pulse)) in layout.sources.iter().enumerate() {
        rhs[first_source + j] = pulse.amplitude;
    }
    let x = lu.solve(&rhs);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite { time: 0.0 });
    }
    Ok((0..netlist.node_count)
        .map(|n| row(n).map_or(0.0, |r| x[r]))
        .collect())
}
