//! Simulation and analysis toolkit for fungal electronics.
//!
//! The pipeline turns a spatial mycelium graph into an RC (or memristive)
//! netlist, simulates it under pulsed stimulation, and mines the two-input
//! Boolean gates it realizes across a sweep of binarization thresholds.
//! A separate toolbox characterizes spikes, spike trains and baseline
//! shifts in electrical recordings of living fungi.

pub mod circuit;
pub mod gates;
pub mod graph;
pub mod memristor;
pub mod solver;
pub mod spikes;

pub use circuit::{build_rc_network, export_netlist_text, Element, Netlist, RcParams, Topology};
pub use gates::{
    classify, measure_truth_table, mine, mine_netlist, trend_summary, ElectrodeAssignment, GateClass,
    GateGroup, GateHistogram, MineSpec, ThetaSweep, TruthTableOutcome,
};
pub use graph::{generate_colony, largest_component, load_graph, ColonySpec, SpatialGraph};
pub use memristor::{cv_sweep, loop_metrics, CvSweep, IvCurve, MemristorModel};
pub use solver::{
    dc_operating_point, simulate, Method, PulseSpec, TransientConfig, TransientResult,
};
