//! Flag definitions. Every field is optional so `--config` can supply it;
//! config keys use the flag names without the leading dashes.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mycoelec::graph::NodeId;
use mycoelec::spikes::{Event, Unit};
use mycoelec::{Method, Topology};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "mycoelec", version, about = "Fungal electronics simulation and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Grow a synthetic colony graph
    GenGraph(GenGraphArgs),
    /// Convert a graph into an RC netlist (JSON)
    BuildNetlist(BuildNetlistArgs),
    /// Write SPICE-style netlist text for external simulators
    ExportSpice(ExportSpiceArgs),
    /// Run a transient simulation and write probe voltages
    Simulate(SimulateArgs),
    /// Cyclic voltammetry of a single memristor
    CvSweep(CvSweepArgs),
    /// Mine Boolean gates over random electrode placements
    MineGates(MineGatesArgs),
    /// Detect spikes, trains and baseline shifts in a recording
    AnalyzeSpikes(AnalyzeSpikesArgs),
    /// Synthesize a recording from events described in a config file
    SynthSignal(SynthSignalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RcArgs {
    /// Resistance per micrometer of hypha, ohms
    #[arg(long)]
    pub rho: Option<f64>,
    /// Capacitance per micrometer of hypha, farads
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub topology: Option<Topology>,
    /// Leak conductance from every node to ground, siemens
    #[arg(long)]
    pub gmin: Option<f64>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PulseArgs {
    /// Pulse amplitude, volts
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub delay: Option<f64>,
    #[arg(long)]
    pub rise: Option<f64>,
    #[arg(long)]
    pub fall: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    /// Repetition period; 0 for a single pulse
    #[arg(long)]
    pub period: Option<f64>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TransientArgs {
    #[arg(long)]
    pub t_stop: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// trapezoidal or backward-euler
    #[arg(long)]
    pub method: Option<Method>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[command(allow_negative_numbers = true)]
pub struct GenGraphArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Node budget of the colony
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub branching_probability: Option<f64>,
    #[arg(long)]
    pub anastomosis_probability: Option<f64>,
    /// Mean step length, micrometers
    #[arg(long)]
    pub step_length_mean: Option<f64>,
    #[arg(long)]
    pub step_length_jitter: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[command(allow_negative_numbers = true)]
pub struct BuildNetlistArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub rc: RcArgs,
    /// Graph node to ground; defaults to the smallest id
    #[arg(long)]
    pub ground: Option<NodeId>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[command(allow_negative_numbers = true)]
pub struct ExportSpiceArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub netlist: Option<PathBuf>,
    /// Graph node driven by the pulse (repeatable)
    #[arg(long)]
    pub source: Option<Vec<NodeId>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub pulse: PulseArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub transient: TransientArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub netlist: Option<PathBuf>,
    /// Graph node driven by the pulse (repeatable)
    #[arg(long)]
    pub source: Option<Vec<NodeId>>,
    /// Graph node to record (repeatable); all graph nodes by default
    #[arg(long)]
    pub probe: Option<Vec<NodeId>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub pulse: PulseArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub transient: TransientArgs,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[command(allow_negative_numbers = true)]
pub struct CvSweepArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub r_on: Option<f64>,
    #[arg(long)]
    pub r_off: Option<f64>,
    /// Initial state in [0, 1]
    #[arg(long)]
    pub w0: Option<f64>,
    /// State mobility, per coulomb
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub window_p: Option<u32>,
    #[arg(long)]
    pub v_peak: Option<f64>,
    /// Volts per second
    #[arg(long)]
    pub sweep_rate: Option<f64>,
    #[arg(long)]
    pub cycles: Option<u32>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[command(allow_negative_numbers = true)]
pub struct MineGatesArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub rc: RcArgs,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; the result does not depend on it
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub theta_step: Option<f64>,
    #[arg(long)]
    pub theta_count: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub pulse: PulseArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub transient: TransientArgs,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-trial electrodes and responses as JSON
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[command(allow_negative_numbers = true)]
pub struct AnalyzeSpikesArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// `t,value` CSV
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// mv or kohm
    #[arg(long)]
    pub unit: Option<Unit>,
    /// Running-median baseline window, seconds
    #[arg(long)]
    pub baseline_window: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Shortest excursion counted as a spike, seconds
    #[arg(long)]
    pub min_width: Option<f64>,
    /// Largest peak-to-peak gap inside a train, seconds
    #[arg(long)]
    pub train_gap: Option<f64>,
    /// Recording of the unstimulated condition to compare against
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long)]
    pub min_shift: Option<f64>,
    #[arg(long)]
    pub settle_fraction: Option<f64>,
    #[arg(long)]
    pub smooth_window: Option<f64>,
    #[arg(long)]
    pub hold: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[command(allow_negative_numbers = true)]
pub struct SynthSignalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Seconds
    #[arg(long)]
    pub duration: Option<f64>,
    /// Seconds
    #[arg(long)]
    pub sample_interval: Option<f64>,
    #[arg(long)]
    pub unit: Option<Unit>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Config-only: list of events
    #[arg(skip)]
    pub events: Option<Vec<Event>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
