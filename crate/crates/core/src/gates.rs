//! Boolean gate mining over random electrode placements.
//!
//! Each trial picks two input electrodes, a ground and an output node,
//! measures the peak output response to every input pattern, and then
//! binarizes those four numbers at each threshold of a sweep.

use std::fmt;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{build_rc_network, CircuitError, Netlist, NodeOrigin, RcParams, Topology};
use crate::graph::{largest_component, NodeId, SpatialGraph};
use crate::solver::{simulate_peak, PulseSpec, SolverError, TransientConfig};

#[derive(Debug, Error)]
pub enum GateError {
    #[error("component has {0} nodes, at least 4 are needed")]
    ComponentTooSmall(usize),
    #[error("electrodes must be four distinct nodes")]
    DuplicateElectrode,
    #[error("electrode node {0} is not in the netlist")]
    UnknownNode(NodeId),
    #[error("pattern {pattern}: {source}")]
    Pattern {
        pattern: &'static str,
        #[source]
        source: SolverError,
    },
    #[error("threshold must be positive and finite")]
    BadThreshold,
    #[error("histogram has no non-FALSE counts")]
    EmptyHistogram,
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// Input patterns in truth-table order.
pub const PATTERNS: [(bool, bool); 4] = [(false, false), (false, true), (true, false), (true, true)];
const PATTERN_NAMES: [&str; 4] = ["(0,0)", "(0,1)", "(1,0)", "(1,1)"];

/// Graph node ids of the four electrodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElectrodeAssignment {
    pub input_a: NodeId,
    pub input_b: NodeId,
    pub ground: NodeId,
    pub output: NodeId,
}

impl ElectrodeAssignment {
    pub fn validate(&self) -> Result<(), GateError> {
        let ids = [self.input_a, self.input_b, self.ground, self.output];
        for i in 0..4 {
            if ids[i + 1..].contains(&ids[i]) {
                return Err(GateError::DuplicateElectrode);
            }
        }
        Ok(())
    }

    /// Uniform draw without replacement from `candidates`.
    pub fn draw(candidates: &[NodeId], rng: &mut ChaCha8Rng) -> Result<Self, GateError> {
        if candidates.len() < 4 {
            return Err(GateError::ComponentTooSmall(candidates.len()));
        }
        let picked = rand::seq::index::sample(rng, candidates.len(), 4);
        let id = |k: usize| candidates[picked.index(k)];
        Ok(Self {
            input_a: id(0),
            input_b: id(1),
            ground: id(2),
            output: id(3),
        })
    }
}

/// Peak output voltages for patterns (0,0), (0,1), (1,0), (1,1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthTableOutcome {
    pub responses: [f64; 4],
}

impl TruthTableOutcome {
    /// Patterns whose response exceeds `theta`, as (b01, b10, b11).
    pub fn bits(&self, theta: f64) -> [bool; 3] {
        [
            self.responses[1] > theta,
            self.responses[2] > theta,
            self.responses[3] > theta,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GateClass {
    False,
    And,
    Or,
    Xor,
    /// ¬x ∧ y
    AndNotA,
    /// x ∧ ¬y
    AndNotB,
    /// output ≡ x
    SelectA,
    /// output ≡ y
    SelectB,
}

impl GateClass {
    pub const ALL: [GateClass; 8] = [
        GateClass::False,
        GateClass::And,
        GateClass::Or,
        GateClass::Xor,
        GateClass::AndNotA,
        GateClass::AndNotB,
        GateClass::SelectA,
        GateClass::SelectB,
    ];

    pub fn from_bits(bits: [bool; 3]) -> Self {
        match bits {
            [false, false, false] => GateClass::False,
            [false, false, true] => GateClass::And,
            [false, true, true] => GateClass::SelectA,
            [true, false, true] => GateClass::SelectB,
            [false, true, false] => GateClass::AndNotB,
            [true, false, false] => GateClass::AndNotA,
            [true, true, false] => GateClass::Xor,
            [true, true, true] => GateClass::Or,
        }
    }

    /// Truth table over all four patterns; f(0,0) is always false.
    pub fn truth_table(self) -> [bool; 4] {
        let f = |x: bool, y: bool| match self {
            GateClass::False => false,
            GateClass::And => x && y,
            GateClass::Or => x || y,
            GateClass::Xor => x ^ y,
            GateClass::AndNotA => !x && y,
            GateClass::AndNotB => x && !y,
            GateClass::SelectA => x,
            GateClass::SelectB => y,
        };
        PATTERNS.map(|(x, y)| f(x, y))
    }

    pub fn group(self) -> GateGroup {
        match self {
            GateClass::False => GateGroup::False,
            GateClass::And => GateGroup::And,
            GateClass::Or => GateGroup::Or,
            GateClass::Xor => GateGroup::Xor,
            GateClass::AndNotA | GateClass::AndNotB => GateGroup::AndNot,
            GateClass::SelectA | GateClass::SelectB => GateGroup::Select,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for GateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateClass::False => "FALSE",
            GateClass::And => "AND",
            GateClass::Or => "OR",
            GateClass::Xor => "XOR",
            GateClass::AndNotA => "AND_NOT_A",
            GateClass::AndNotB => "AND_NOT_B",
            GateClass::SelectA => "SELECT_A",
            GateClass::SelectB => "SELECT_B",
        })
    }
}

/// Display groups, in histogram column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GateGroup {
    And,
    Or,
    AndNot,
    Select,
    Xor,
    False,
}

impl GateGroup {
    pub const ALL: [GateGroup; 6] = [
        GateGroup::And,
        GateGroup::Or,
        GateGroup::AndNot,
        GateGroup::Select,
        GateGroup::Xor,
        GateGroup::False,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateGroup::And => "AND",
            GateGroup::Or => "OR",
            GateGroup::AndNot => "ANDNOT",
            GateGroup::Select => "SELECT",
            GateGroup::Xor => "XOR",
            GateGroup::False => "FALSE",
        }
    }
}

impl fmt::Display for GateGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Binarizes `outcome` at `theta` (volts).
pub fn classify(outcome: &TruthTableOutcome, theta: f64) -> GateClass {
    GateClass::from_bits(outcome.bits(theta))
}

/// Thresholds `θ_k = k · step` for `k = 1..=count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThetaSweep {
    pub step: f64,
    pub count: usize,
}

impl Default for ThetaSweep {
    fn default() -> Self {
        Self {
            step: 1e-4,
            count: 500,
        }
    }
}

impl ThetaSweep {
    pub fn thresholds(&self) -> Result<Vec<f64>, GateError> {
        if !(self.step.is_finite() && self.step > 0.0) || self.count == 0 {
            return Err(GateError::BadThreshold);
        }
        // k / 10000 rounds to the shortest decimal, k * 1e-4 often does not
        let inv = 1.0 / self.step;
        Ok((1..=self.count)
            .map(|k| {
                if inv.fract() == 0.0 {
                    k as f64 / inv
                } else {
                    k as f64 * self.step
                }
            })
            .collect())
    }
}

/// Applies a measured truth table to the netlist: regrounds it, attaches the
/// pulse to the driven inputs, and records peak |V(output)|. The (0,0)
/// response is zero by definition and is not simulated.
pub fn measure_truth_table(
    netlist: &Netlist,
    assignment: &ElectrodeAssignment,
    pulse: &PulseSpec,
    config: &TransientConfig,
) -> Result<TruthTableOutcome, GateError> {
    assignment.validate()?;
    let lookup = |n: &Netlist, id: NodeId| n.node_of(id).ok_or(GateError::UnknownNode(id));
    let grounded = netlist.with_ground(lookup(netlist, assignment.ground)?);
    let a = lookup(&grounded, assignment.input_a)?;
    let b = lookup(&grounded, assignment.input_b)?;
    let out = lookup(&grounded, assignment.output)?;

    let mut responses = [0.0; 4];
    for (k, &(x, y)) in PATTERNS.iter().enumerate().skip(1) {
        let mut sources = Vec::with_capacity(2);
        if x {
            sources.push((a, *pulse));
        }
        if y {
            sources.push((b, *pulse));
        }
        responses[k] = simulate_peak(&grounded, &sources, config, out).map_err(|source| {
            GateError::Pattern {
                pattern: PATTERN_NAMES[k],
                source,
            }
        })?;
    }
    Ok(TruthTableOutcome { responses })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MineSpec {
    pub trials: usize,
    pub seed: u64,
    pub pulse: PulseSpec,
    pub transient: TransientConfig,
    pub sweep: ThetaSweep,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl Default for MineSpec {
    fn default() -> Self {
        Self {
            trials: 1000,
            seed: 0,
            pulse: PulseSpec::default(),
            transient: TransientConfig::default(),
            sweep: ThetaSweep::default(),
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningMetadata {
    pub topology: Option<Topology>,
    pub seed: u64,
    pub trials: usize,
    pub completed: usize,
    pub failures: Vec<TrialFailure>,
}

/// Gate counts per threshold. Failed trials are left out, so each row sums
/// to `metadata.completed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateHistogram {
    pub thresholds: Vec<f64>,
    /// Per threshold, counts indexed like [`GateClass::ALL`].
    pub class_counts: Vec<[u64; 8]>,
    pub metadata: MiningMetadata,
}

impl GateHistogram {
    pub fn empty(thresholds: Vec<f64>, metadata: MiningMetadata) -> Self {
        let class_counts = vec![[0; 8]; thresholds.len()];
        Self {
            thresholds,
            class_counts,
            metadata,
        }
    }

    pub fn add(&mut self, outcome: &TruthTableOutcome) {
        for (theta, row) in self.thresholds.iter().zip(&mut self.class_counts) {
            row[classify(outcome, *theta).index()] += 1;
        }
    }

    pub fn class_count(&self, k: usize, class: GateClass) -> u64 {
        self.class_counts[k][class.index()]
    }

    pub fn group_count(&self, k: usize, group: GateGroup) -> u64 {
        GateClass::ALL
            .iter()
            .filter(|c| c.group() == group)
            .map(|c| self.class_counts[k][c.index()])
            .sum()
    }

    pub fn group_series(&self, group: GateGroup) -> Vec<u64> {
        (0..self.thresholds.len())
            .map(|k| self.group_count(k, group))
            .collect()
    }

    /// Total non-FALSE count per threshold.
    pub fn active_series(&self) -> Vec<u64> {
        self.class_counts
            .iter()
            .map(|row| row.iter().sum::<u64>() - row[GateClass::False.index()])
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta");
        for g in GateGroup::ALL {
            out.push(',');
            out.push_str(g.name());
        }
        out.push('\n');
        for (k, theta) in self.thresholds.iter().enumerate() {
            let _ = write!(out, "{theta}");
            for g in GateGroup::ALL {
                let _ = write!(out, ",{}", self.group_count(k, g));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub assignment: ElectrodeAssignment,
    pub outcome: Option<TruthTableOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MineReport {
    pub histogram: GateHistogram,
    pub trials: Vec<TrialRecord>,
}

/// Generator for trial `trial`: the run seed with the trial index as stream.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Mines the largest component of `graph` as an RC network.
pub fn mine(graph: &SpatialGraph, params: &RcParams, spec: &MineSpec) -> Result<MineReport, GateError> {
    let component = largest_component(graph);
    if component.node_count() < 4 {
        return Err(GateError::ComponentTooSmall(component.node_count()));
    }
    let netlist = build_rc_network(&component, params)?;
    let mut report = mine_netlist(&netlist, spec)?;
    report.histogram.metadata.topology = Some(params.topology);
    Ok(report)
}

/// Mines a prebuilt netlist; electrodes are drawn from its graph nodes.
pub fn mine_netlist(netlist: &Netlist, spec: &MineSpec) -> Result<MineReport, GateError> {
    netlist.validate()?;
    spec.pulse
        .validate()
        .and_then(|_| spec.transient.steps())
        .map_err(|source| GateError::Pattern {
            pattern: "setup",
            source,
        })?;
    let thresholds = spec.sweep.thresholds()?;
    let mut candidates: Vec<NodeId> = netlist
        .origin
        .iter()
        .filter_map(|o| match o {
            NodeOrigin::Graph { id } => Some(*id),
            NodeOrigin::Junction { .. } => None,
        })
        .collect();
    candidates.sort_unstable();
    if candidates.len() < 4 {
        return Err(GateError::ComponentTooSmall(candidates.len()));
    }

    let run_trial = |trial: usize| -> (TrialRecord, Option<String>) {
        let mut rng = trial_rng(spec.seed, trial);
        let assignment = ElectrodeAssignment::draw(&candidates, &mut rng).expect("enough candidates");
        match measure_truth_table(netlist, &assignment, &spec.pulse, &spec.transient) {
            Ok(outcome) => {
                assert_eq!(outcome.responses[0], 0.0, "trial {trial}: (0,0) must not respond");
                (
                    TrialRecord {
                        trial,
                        assignment,
                        outcome: Some(outcome),
                    },
                    None,
                )
            }
            Err(e) => (
                TrialRecord {
                    trial,
                    assignment,
                    outcome: None,
                },
                Some(e.to_string()),
            ),
        }
    };
    let results: Vec<(TrialRecord, Option<String>)> = match spec.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| GateError::ThreadPool(e.to_string()))?
            .install(|| (0..spec.trials).into_par_iter().map(run_trial).collect()),
        None => (0..spec.trials).into_par_iter().map(run_trial).collect(),
    };

    let mut histogram = GateHistogram::empty(
        thresholds,
        MiningMetadata {
            topology: None,
            seed: spec.seed,
            trials: spec.trials,
            completed: 0,
            failures: Vec::new(),
        },
    );
    let mut trials = Vec::with_capacity(results.len());
    for (record, failure) in results {
        if let Some(outcome) = &record.outcome {
            histogram.add(outcome);
            histogram.metadata.completed += 1;
        }
        if let Some(message) = failure {
            histogram.metadata.failures.push(TrialFailure {
                trial: record.trial,
                message,
            });
        }
        trials.push(record);
    }
    Ok(MineReport { histogram, trials })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTrend {
    pub group: GateGroup,
    /// First θ from which the count stays at zero.
    pub extinction: Option<f64>,
    /// θ of the largest count (first one on ties).
    pub argmax: f64,
    pub max_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSummary {
    pub groups: Vec<GroupTrend>,
    /// Least-squares slope of log(total non-FALSE count) against log θ,
    /// over thresholds with a positive count.
    pub log_log_slope: Option<f64>,
}

pub fn trend_summary(hist: &GateHistogram) -> Result<TrendSummary, GateError> {
    let active = hist.active_series();
    if active.iter().all(|&c| c == 0) {
        return Err(GateError::EmptyHistogram);
    }
    let groups = GateGroup::ALL
        .iter()
        .map(|&group| {
            let series = hist.group_series(group);
            let tail = series.iter().rev().take_while(|&&c| c == 0).count();
            let extinction = (tail > 0).then(|| hist.thresholds[series.len() - tail]);
            let (argmax, max_count) = series
                .iter()
                .enumerate()
                .fold((0, 0), |(bk, bc), (k, &c)| if c > bc { (k, c) } else { (bk, bc) });
            GroupTrend {
                group,
                extinction,
                argmax: hist.thresholds[argmax],
                max_count,
            }
        })
        .collect();

    let points: Vec<(f64, f64)> = hist
        .thresholds
        .iter()
        .zip(&active)
        .filter(|(_, &c)| c > 0)
        .map(|(&t, &c)| (t.ln(), (c as f64).ln()))
        .collect();
    let log_log_slope = (points.len() >= 2).then(|| {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(TrendSummary {
        groups,
        log_log_slope,
    })
}
