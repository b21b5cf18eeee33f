mod args;
mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use mycoelec::circuit::{CircuitError, NodeOrigin};
use mycoelec::gates::{GateError, MineSpec, ThetaSweep};
use mycoelec::graph::{ColonySpec, GraphError, NodeId};
use mycoelec::memristor::MemristorError;
use mycoelec::solver::SolverError;
use mycoelec::spikes::{
    classify_train, compare_stimulus_responses, detect_baseline_shift, detect_spikes, group_trains,
    synthesize_recording, Recording, ShiftParams, Spike, SpikeStats, SynthSpec, Unit,
};
use mycoelec::{
    build_rc_network, cv_sweep, export_netlist_text, generate_colony, load_graph, loop_metrics, mine, simulate,
    trend_summary, CvSweep, MemristorModel, Netlist, PulseSpec, RcParams, TransientConfig,
};
use serde_json::{json, Value};
use thiserror::Error;

use args::*;
use config::{emit, read, resolve, to_json, write_atomic, Sidecar};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("circuit: {0}")]
    Circuit(#[from] CircuitError),
    #[error("solver: {0}")]
    Solver(#[from] SolverError),
    #[error("memristor: {0}")]
    Memristor(#[from] MemristorError),
    #[error("gates: {0}")]
    Gates(#[from] GateError),
    #[error("spikes: {0}")]
    Spikes(#[from] mycoelec::spikes::SpikeError),
    #[error("circuit: graph node {0} is not in the netlist")]
    UnknownNode(NodeId),
    #[error("io: {0}")]
    Io(String),
    #[error("config: {0}")]
    Config(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenGraph(a) => gen_graph(resolve(&a, a.config.as_deref())?),
        Command::BuildNetlist(a) => build_netlist(resolve(&a, a.config.as_deref())?),
        Command::ExportSpice(a) => export_spice(resolve(&a, a.config.as_deref())?),
        Command::Simulate(a) => simulate_cmd(resolve(&a, a.config.as_deref())?),
        Command::CvSweep(a) => cv_sweep_cmd(resolve(&a, a.config.as_deref())?),
        Command::MineGates(a) => mine_gates(resolve(&a, a.config.as_deref())?),
        Command::AnalyzeSpikes(a) => analyze_spikes(resolve(&a, a.config.as_deref())?),
        Command::SynthSignal(a) => synth_signal(resolve(&a, a.config.as_deref())?),
    }
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
    v.as_ref()
        .ok_or_else(|| CliError::Config(format!("--{flag} is required")))
}

fn value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

impl RcArgs {
    fn fill(&mut self) -> RcParams {
        let d = RcParams::default();
        RcParams {
            rho: *self.rho.get_or_insert(d.rho),
            kappa: *self.kappa.get_or_insert(d.kappa),
            topology: *self.topology.get_or_insert(d.topology),
            gmin: *self.gmin.get_or_insert(d.gmin),
        }
    }
}

impl PulseArgs {
    fn fill(&mut self) -> PulseSpec {
        let d = PulseSpec::default();
        PulseSpec {
            amplitude: *self.amplitude.get_or_insert(d.amplitude),
            delay: *self.delay.get_or_insert(d.delay),
            rise: *self.rise.get_or_insert(d.rise),
            fall: *self.fall.get_or_insert(d.fall),
            width: *self.width.get_or_insert(d.width),
            period: *self.period.get_or_insert(d.period),
        }
    }
}

impl TransientArgs {
    fn fill(&mut self) -> TransientConfig {
        let d = TransientConfig::default();
        TransientConfig {
            t_stop: *self.t_stop.get_or_insert(d.t_stop),
            dt: *self.dt.get_or_insert(d.dt),
            method: *self.method.get_or_insert(d.method),
        }
    }
}

fn load_graph_file(path: &Path) -> Result<mycoelec::SpatialGraph, CliError> {
    Ok(load_graph(&read(path)?)?)
}

fn load_netlist(path: &Path) -> Result<Netlist, CliError> {
    let netlist: Netlist = serde_json::from_str(&read(path)?)
        .map_err(|e| CliError::Circuit(CircuitError::InvalidParams(format!("{}: {e}", path.display()))))?;
    Ok(netlist)
}

/// Netlist index of graph node `id`.
fn node_index(netlist: &Netlist, id: NodeId) -> Result<usize, CliError> {
    netlist
        .node_of(id)
        .ok_or(CliError::UnknownNode(id))
}

fn gen_graph(mut a: GenGraphArgs) -> Result<(), CliError> {
    let out = required(&a.out, "out")?.clone();
    let d = ColonySpec::default();
    let spec = ColonySpec {
        node_budget: *a.nodes.get_or_insert(d.node_budget),
        branching_probability: *a.branching_probability.get_or_insert(d.branching_probability),
        anastomosis_probability: *a.anastomosis_probability.get_or_insert(d.anastomosis_probability),
        step_length_mean: *a.step_length_mean.get_or_insert(d.step_length_mean),
        step_length_jitter: *a.step_length_jitter.get_or_insert(d.step_length_jitter),
        seed: *a.seed.get_or_insert(d.seed),
    };
    let g = generate_colony(&spec)?;
    let mut meta = Sidecar::new("gen-graph", Some(spec.seed), value(&a));
    meta.summary = json!({ "nodes": g.node_count(), "edges": g.edge_count(), "total_length": g.total_length() });
    emit(&out, g.to_text().as_bytes(), &meta)
}

fn build_netlist(mut a: BuildNetlistArgs) -> Result<(), CliError> {
    let out = required(&a.out, "out")?.clone();
    let graph = load_graph_file(required(&a.graph, "graph")?)?;
    let rc = a.rc.fill();
    let mut netlist = build_rc_network(&graph, &rc)?;
    let ground = *a.ground.get_or_insert(graph.nodes()[0].id);
    netlist = netlist.with_ground(node_index(&netlist, ground)?);
    netlist.validate()?;
    let mut meta = Sidecar::new("build-netlist", None, value(&a));
    meta.summary = json!({ "node_count": netlist.node_count, "elements": netlist.elements.len() });
    emit(&out, &to_json(&netlist), &meta)
}

fn sources(netlist: &Netlist, ids: &[NodeId], pulse: PulseSpec) -> Result<Vec<(usize, PulseSpec)>, CliError> {
    ids.iter()
        .map(|&id| Ok((node_index(netlist, id)?, pulse)))
        .collect()
}

fn export_spice(mut a: ExportSpiceArgs) -> Result<(), CliError> {
    let out = required(&a.out, "out")?.clone();
    let netlist = load_netlist(required(&a.netlist, "netlist")?)?;
    let pulse = a.pulse.fill();
    let transient = a.transient.fill();
    let src = sources(&netlist, a.source.get_or_insert_with(Vec::new), pulse)?;
    let text = export_netlist_text(&netlist, &src, &transient)?;
    emit(&out, text.as_bytes(), &Sidecar::new("export-spice", None, value(&a)))
}

fn graph_nodes(netlist: &Netlist) -> Vec<NodeId> {
    let mut ids: Vec<NodeId> = netlist
        .origin
        .iter()
        .filter_map(|o| match o {
            NodeOrigin::Graph { id } => Some(*id),
            NodeOrigin::Junction { .. } => None,
        })
        .collect();
    ids.sort_unstable();
    ids
}

fn simulate_cmd(mut a: SimulateArgs) -> Result<(), CliError> {
    let out = required(&a.out, "out")?.clone();
    let netlist = load_netlist(required(&a.netlist, "netlist")?)?;
    let pulse = a.pulse.fill();
    let transient = a.transient.fill();
    let format = *a.format.get_or_insert(Format::Csv);
    let src = sources(&netlist, a.source.get_or_insert_with(Vec::new), pulse)?;
    let probes = a.probe.get_or_insert_with(|| graph_nodes(&netlist)).clone();
    let rows: Vec<usize> = probes
        .iter()
        .map(|&id| node_index(&netlist, id))
        .collect::<Result<_, _>>()?;
    let result = simulate(&netlist, &src, &transient)?;

    let body = match format {
        Format::Csv => {
            let mut s = String::from("t");
            for id in &probes {
                let _ = write!(s, ",{id}");
            }
            s.push('\n');
            for (k, t) in result.times.iter().enumerate() {
                let _ = write!(s, "{t}");
                for &r in &rows {
                    let _ = write!(s, ",{}", result.node_voltages[r][k]);
                }
                s.push('\n');
            }
            s.into_bytes()
        }
        Format::Json => {
            let voltages: serde_json::Map<String, Value> = probes
                .iter()
                .zip(&rows)
                .map(|(id, &r)| (id.to_string(), value(&result.node_voltages[r])))
                .collect();
            to_json(&json!({ "times": result.times, "voltages": voltages }))
        }
    };
    emit(&out, &body, &Sidecar::new("simulate", None, value(&a)))
}

fn cv_sweep_cmd(mut a: CvSweepArgs) -> Result<(), CliError> {
    let out = required(&a.out, "out")?.clone();
    let dm = MemristorModel::default();
    let model = MemristorModel {
        r_on: *a.r_on.get_or_insert(dm.r_on),
        r_off: *a.r_off.get_or_insert(dm.r_off),
        w: *a.w0.get_or_insert(dm.w),
        mu: *a.mu.get_or_insert(dm.mu),
        window_p: *a.window_p.get_or_insert(dm.window_p),
    };
    let ds = CvSweep::default();
    let sweep = CvSweep {
        v_peak: *a.v_peak.get_or_insert(ds.v_peak),
        sweep_rate: *a.sweep_rate.get_or_insert(ds.sweep_rate),
        cycles: *a.cycles.get_or_insert(ds.cycles),
        dt: *a.dt.get_or_insert(ds.dt),
    };
    let format = *a.format.get_or_insert(Format::Csv);
    let curve = cv_sweep(&model, &sweep)?;
    let body = match format {
        Format::Csv => curve.to_csv().into_bytes(),
        Format::Json => to_json(&curve),
    };
    let mut meta = Sidecar::new("cv-sweep", None, value(&a));
    meta.summary = json!({
        "max_abs_current": curve.max_abs_current(),
        "loop": loop_metrics(&curve).ok(),
    });
    emit(&out, &body, &meta)
}

fn mine_gates(mut a: MineGatesArgs) -> Result<(), CliError> {
    let out = required(&a.out, "out")?.clone();
    let graph = load_graph_file(required(&a.graph, "graph")?)?;
    let rc = a.rc.fill();
    let d = MineSpec::default();
    let ds = ThetaSweep::default();
    let spec = MineSpec {
        trials: *a.trials.get_or_insert(d.trials),
        seed: *a.seed.get_or_insert(d.seed),
        pulse: a.pulse.fill(),
        transient: a.transient.fill(),
        sweep: ThetaSweep {
            step: *a.theta_step.get_or_insert(ds.step),
            count: *a.theta_count.get_or_insert(ds.count),
        },
        jobs: a.jobs,
    };
    let format = *a.format.get_or_insert(Format::Csv);
    let report = mine(&graph, &rc, &spec)?;
    let hist = &report.histogram;
    let body = match format {
        Format::Csv => hist.to_csv().into_bytes(),
        Format::Json => to_json(hist),
    };
    if let Some(records) = &a.records {
        write_atomic(records, &to_json(&report.trials))?;
    }
    let mut meta = Sidecar::new("mine-gates", Some(spec.seed), value(&a));
    meta.summary = json!({
        "completed": hist.metadata.completed,
        "failures": hist.metadata.failures.len(),
        "trend": trend_summary(hist).ok(),
    });
    emit(&out, &body, &meta)
}

fn load_recording(path: &Path, unit: Unit) -> Result<Recording, CliError> {
    Ok(Recording::from_csv(&read(path)?, unit)?)
}

fn analyze_spikes(mut a: AnalyzeSpikesArgs) -> Result<(), CliError> {
    let out = required(&a.out, "out")?.clone();
    let unit = *a.unit.get_or_insert(Unit::Millivolts);
    let rec = load_recording(required(&a.input, "input")?, unit)?;
    let baseline_window = *required(&a.baseline_window, "baseline-window")?;
    let threshold = *required(&a.threshold, "threshold")?;
    let min_width = *a.min_width.get_or_insert(0.0);
    let ds = ShiftParams::default();
    let shift_params = ShiftParams {
        min_shift: *a.min_shift.get_or_insert(ds.min_shift),
        settle_fraction: *a.settle_fraction.get_or_insert(ds.settle_fraction),
        smooth_window: *a.smooth_window.get_or_insert(ds.smooth_window),
        hold: *a.hold.get_or_insert(ds.hold),
    };
    let format = *a.format.get_or_insert(Format::Json);

    let spikes = detect_spikes(&rec, baseline_window, threshold, min_width)?;
    let trains: Vec<Value> = match a.train_gap {
        Some(gap) => group_trains(&spikes, gap)
            .into_iter()
            .map(|t| {
                let class = classify_train(&t).ok();
                json!({
                    "first_peak": t.spikes[0].peak_time,
                    "count": t.spikes.len(),
                    "mean_width": t.mean_width,
                    "mean_amplitude": t.mean_amplitude,
                    "mean_inter_spike_interval": t.mean_inter_spike_interval,
                    "class": class,
                })
            })
            .collect(),
        None => Vec::new(),
    };
    let shifts = detect_baseline_shift(&rec, &shift_params)?;
    let comparison = match &a.compare {
        Some(path) => {
            let off = load_recording(path, unit)?;
            let off_spikes = detect_spikes(&off, baseline_window, threshold, min_width)?;
            Some(compare_stimulus_responses(&spikes, &off_spikes)?)
        }
        None => None,
    };

    let body = match format {
        Format::Csv => spikes_csv(&spikes).into_bytes(),
        Format::Json => to_json(&json!({
            "spikes": spikes,
            "stats": SpikeStats::of(&spikes),
            "trains": trains,
            "baseline_shifts": shifts,
            "comparison": comparison,
        })),
    };
    let mut meta = Sidecar::new("analyze-spikes", None, value(&a));
    meta.summary = json!({ "spikes": spikes.len(), "trains": trains.len(), "baseline_shifts": shifts.len() });
    emit(&out, &body, &meta)
}

fn spikes_csv(spikes: &[Spike]) -> String {
    let mut s = String::from("peak_time,amplitude,width,onset_index,peak_index,end_index\n");
    for p in spikes {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            p.peak_time, p.amplitude, p.width, p.onset_index, p.peak_index, p.end_index
        );
    }
    s
}

fn synth_signal(mut a: SynthSignalArgs) -> Result<(), CliError> {
    let out: PathBuf = required(&a.out, "out")?.clone();
    let spec = SynthSpec {
        duration: *required(&a.duration, "duration")?,
        sample_interval: *required(&a.sample_interval, "sample-interval")?,
        unit: *a.unit.get_or_insert(Unit::Millivolts),
        events: a.events.get_or_insert_with(Vec::new).clone(),
        noise_sd: *a.noise_sd.get_or_insert(0.0),
        seed: *a.seed.get_or_insert(0),
    };
    let rec = synthesize_recording(&spec)?;
    let meta = Sidecar::new("synth-signal", Some(spec.seed), value(&a));
    emit(&out, rec.to_csv().as_bytes(), &meta)
}
