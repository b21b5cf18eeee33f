//! Python bindings. Configuration objects are passed as plain dicts and go
//! through the same serde definitions as the CLI's JSON configs, so unknown
//! keys are rejected and omitted keys take the library defaults.

use std::collections::BTreeMap;

use mycoelec::circuit::NodeOrigin;
use mycoelec::gates::{GateGroup, MineSpec, TruthTableOutcome};
use mycoelec::graph::{ColonySpec, NodeId};
use mycoelec::spikes::{self, Recording, ShiftParams, Spike, SynthSpec, Unit};
use mycoelec::{
    build_rc_network, cv_sweep, dc_operating_point, export_netlist_text, generate_colony, largest_component,
    load_graph, loop_metrics, mine, simulate, trend_summary, CvSweep, GateHistogram, MemristorModel, Netlist,
    PulseSpec, RcParams, SpatialGraph, TransientConfig,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(module: &str, e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(format!("{module}: {e}"))
}

/// Deserializes a dict (or `None`, meaning all defaults) into `T`.
fn from_py<T: DeserializeOwned>(obj: Option<&Bound<'_, PyAny>>, what: &str) -> PyResult<T> {
    let text = match obj {
        Some(o) if !o.is_none() => {
            let json = o.py().import("json")?;
            json.call_method1("dumps", (o,))?.extract::<String>()?
        }
        _ => "{}".to_string(),
    };
    serde_json::from_str(&text).map_err(|e| err("config", format!("{what}: {e}")))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| err("config", e))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_unit(unit: &str) -> PyResult<Unit> {
    unit.parse().map_err(|e| err("spikes", e))
}

#[pyclass(name = "SpatialGraph", module = "mycoelec_py", frozen)]
struct PyGraph {
    inner: SpatialGraph,
}

#[pymethods]
impl PyGraph {
    /// Parses the `mycograph v1` text format.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        let inner = load_graph(text).map_err(|e| err("graph", e))?;
        Ok(Self { inner })
    }

    /// Grows a synthetic colony; `spec` keys follow `ColonySpec`.
    #[staticmethod]
    #[pyo3(signature = (spec=None))]
    fn generate(spec: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let spec: ColonySpec = from_py(spec, "colony spec")?;
        let inner = generate_colony(&spec).map_err(|e| err("graph", e))?;
        Ok(Self { inner })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn node_ids(&self) -> Vec<NodeId> {
        self.inner.nodes().iter().map(|n| n.id).collect()
    }

    fn edges(&self) -> Vec<(NodeId, NodeId, f64)> {
        self.inner.edges().iter().map(|e| (e.u, e.v, e.length)).collect()
    }

    fn is_connected(&self) -> bool {
        self.inner.is_connected()
    }

    fn largest_component(&self) -> Self {
        Self {
            inner: largest_component(&self.inner),
        }
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "SpatialGraph(nodes={}, edges={})",
            self.inner.node_count(),
            self.inner.edge_count()
        )
    }
}

#[pyclass(name = "Netlist", module = "mycoelec_py", frozen)]
struct PyNetlist {
    inner: Netlist,
}

impl PyNetlist {
    fn index(&self, id: NodeId) -> PyResult<usize> {
        self.inner
            .node_of(id)
            .ok_or_else(|| err("circuit", format!("graph node {id} is not in the netlist")))
    }

    fn sources(&self, ids: &[NodeId], pulse: PulseSpec) -> PyResult<Vec<(usize, PulseSpec)>> {
        ids.iter().map(|&id| Ok((self.index(id)?, pulse))).collect()
    }

    fn graph_ids(&self) -> Vec<(NodeId, usize)> {
        let mut ids: Vec<(NodeId, usize)> = self
            .inner
            .origin
            .iter()
            .enumerate()
            .filter_map(|(k, o)| match o {
                NodeOrigin::Graph { id } => Some((*id, k)),
                NodeOrigin::Junction { .. } => None,
            })
            .collect();
        ids.sort_unstable();
        ids
    }
}

#[pymethods]
impl PyNetlist {
    /// RC network over `graph`; `params` keys follow `RcParams`. `ground` is
    /// a graph node id and defaults to the smallest one.
    #[staticmethod]
    #[pyo3(signature = (graph, params=None, ground=None))]
    fn from_graph(graph: &PyGraph, params: Option<&Bound<'_, PyAny>>, ground: Option<NodeId>) -> PyResult<Self> {
        let params: RcParams = from_py(params, "rc params")?;
        let netlist = build_rc_network(&graph.inner, &params).map_err(|e| err("circuit", e))?;
        let ground = ground.unwrap_or(graph.inner.nodes()[0].id);
        let node = netlist
            .node_of(ground)
            .ok_or_else(|| err("circuit", format!("graph node {ground} is not in the netlist")))?;
        Ok(Self {
            inner: netlist.with_ground(node),
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: Netlist = serde_json::from_str(text).map_err(|e| err("circuit", e))?;
        inner.validate().map_err(|e| err("circuit", e))?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("serializable")
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count
    }

    /// Netlist index of graph node `id`.
    fn node_of(&self, id: NodeId) -> Option<usize> {
        self.inner.node_of(id)
    }

    /// Transient run with the same pulse on every node in `sources`.
    /// Returns `{"times": [...], "voltages": {graph_id: [...]}}`.
    #[pyo3(signature = (sources, probes=None, pulse=None, transient=None))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        sources: Vec<NodeId>,
        probes: Option<Vec<NodeId>>,
        pulse: Option<&Bound<'py, PyAny>>,
        transient: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let pulse: PulseSpec = from_py(pulse, "pulse")?;
        let transient: TransientConfig = from_py(transient, "transient")?;
        let src = self.sources(&sources, pulse)?;
        let probes: Vec<(NodeId, usize)> = match probes {
            Some(ids) => ids
                .into_iter()
                .map(|id| Ok((id, self.index(id)?)))
                .collect::<PyResult<_>>()?,
            None => self.graph_ids(),
        };
        let result = py
            .detach(|| simulate(&self.inner, &src, &transient))
            .map_err(|e| err("solver", e))?;
        let voltages: BTreeMap<NodeId, &Vec<f64>> = probes
            .iter()
            .map(|&(id, k)| (id, &result.node_voltages[k]))
            .collect();
        to_py(py, &serde_json::json!({ "times": result.times, "voltages": voltages }))
    }

    /// Resistive operating point with `sources` (graph id to volts) held.
    fn dc_operating_point(&self, sources: BTreeMap<NodeId, f64>) -> PyResult<BTreeMap<NodeId, f64>> {
        let held: Vec<(usize, f64)> = sources
            .iter()
            .map(|(&id, &v)| Ok((self.index(id)?, v)))
            .collect::<PyResult<_>>()?;
        let v = dc_operating_point(&self.inner, &held).map_err(|e| err("solver", e))?;
        Ok(self.graph_ids().into_iter().map(|(id, k)| (id, v[k])).collect())
    }

    #[pyo3(signature = (sources, pulse=None, transient=None))]
    fn export_spice(
        &self,
        sources: Vec<NodeId>,
        pulse: Option<&Bound<'_, PyAny>>,
        transient: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<String> {
        let pulse: PulseSpec = from_py(pulse, "pulse")?;
        let transient: TransientConfig = from_py(transient, "transient")?;
        let src = self.sources(&sources, pulse)?;
        export_netlist_text(&self.inner, &src, &transient).map_err(|e| err("circuit", e))
    }

    fn __repr__(&self) -> String {
        format!(
            "Netlist(nodes={}, elements={})",
            self.inner.node_count,
            self.inner.elements.len()
        )
    }
}

#[pyclass(name = "GateHistogram", module = "mycoelec_py", frozen)]
struct PyHistogram {
    inner: GateHistogram,
}

fn parse_group(name: &str) -> PyResult<GateGroup> {
    GateGroup::ALL
        .into_iter()
        .find(|g| g.name().eq_ignore_ascii_case(name))
        .ok_or_else(|| err("gates", format!("unknown gate group {name:?}")))
}

#[pymethods]
impl PyHistogram {
    #[getter]
    fn thresholds(&self) -> Vec<f64> {
        self.inner.thresholds.clone()
    }

    #[getter]
    fn completed(&self) -> usize {
        self.inner.metadata.completed
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.metadata.seed
    }

    /// Counts per threshold for one of AND, OR, ANDNOT, SELECT, XOR, FALSE.
    fn group_series(&self, group: &str) -> PyResult<Vec<u64>> {
        Ok(self.inner.group_series(parse_group(group)?))
    }

    fn active_series(&self) -> Vec<u64> {
        self.inner.active_series()
    }

    fn trend_summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let summary = trend_summary(&self.inner).map_err(|e| err("gates", e))?;
        to_py(py, &summary)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

/// Mines the largest component of `graph`; `params` keys follow `RcParams`
/// and `spec` keys follow `MineSpec`.
#[pyfunction]
#[pyo3(signature = (graph, params=None, spec=None))]
fn mine_gates(
    py: Python<'_>,
    graph: &PyGraph,
    params: Option<&Bound<'_, PyAny>>,
    spec: Option<&Bound<'_, PyAny>>,
) -> PyResult<PyHistogram> {
    let params: RcParams = from_py(params, "rc params")?;
    let spec: MineSpec = from_py(spec, "mine spec")?;
    let report = py
        .detach(|| mine(&graph.inner, &params, &spec))
        .map_err(|e| err("gates", e))?;
    Ok(PyHistogram {
        inner: report.histogram,
    })
}

/// Gate realized by peak responses to `(0,0), (0,1), (1,0), (1,1)` at `theta`.
#[pyfunction]
fn classify(responses: [f64; 4], theta: f64) -> String {
    mycoelec::classify(&TruthTableOutcome { responses }, theta).to_string()
}

/// Cyclic voltammetry; returns `{"t", "v", "i", "pinch_current", "lobe_area"}`.
#[pyfunction]
#[pyo3(signature = (model=None, sweep=None))]
fn cv_sweep_curve<'py>(
    py: Python<'py>,
    model: Option<&Bound<'py, PyAny>>,
    sweep: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let model: MemristorModel = from_py(model, "memristor model")?;
    let sweep: CvSweep = from_py(sweep, "cv sweep")?;
    let curve = cv_sweep(&model, &sweep).map_err(|e| err("memristor", e))?;
    let metrics = loop_metrics(&curve).map_err(|e| err("memristor", e))?;
    let col = |f: fn(&mycoelec::memristor::IvSample) -> f64| curve.samples.iter().map(f).collect::<Vec<f64>>();
    to_py(
        py,
        &serde_json::json!({
            "t": col(|s| s.t),
            "v": col(|s| s.v),
            "i": col(|s| s.i),
            "pinch_current": metrics.pinch_current,
            "lobe_area": metrics.lobe_area,
        }),
    )
}

#[pyclass(name = "Recording", module = "mycoelec_py", frozen)]
struct PyRecording {
    inner: Recording,
}

#[pymethods]
impl PyRecording {
    /// `unit` is "mv" or "kohm".
    #[new]
    #[pyo3(signature = (sample_interval, samples, unit="mv"))]
    fn new(sample_interval: f64, samples: Vec<f64>, unit: &str) -> PyResult<Self> {
        let inner = Recording::new(sample_interval, samples, parse_unit(unit)?).map_err(|e| err("spikes", e))?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (text, unit="mv"))]
    fn from_csv(text: &str, unit: &str) -> PyResult<Self> {
        let inner = Recording::from_csv(text, parse_unit(unit)?).map_err(|e| err("spikes", e))?;
        Ok(Self { inner })
    }

    /// Builds a recording from a `SynthSpec` dict.
    #[staticmethod]
    fn synthesize(spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let spec: SynthSpec = from_py(Some(spec), "synth spec")?;
        let inner = spikes::synthesize_recording(&spec).map_err(|e| err("spikes", e))?;
        Ok(Self { inner })
    }

    #[getter]
    fn sample_interval(&self) -> f64 {
        self.inner.sample_interval
    }

    #[getter]
    fn samples(&self) -> Vec<f64> {
        self.inner.samples.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

#[pyfunction]
fn detect_spikes<'py>(
    py: Python<'py>,
    recording: &PyRecording,
    baseline_window: f64,
    threshold: f64,
    min_width: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let found = spikes::detect_spikes(&recording.inner, baseline_window, threshold, min_width)
        .map_err(|e| err("spikes", e))?;
    to_py(py, &found)
}

/// Groups spikes (as returned by `detect_spikes`) into trains and
/// classifies kiloohm trains.
#[pyfunction]
fn spike_trains<'py>(py: Python<'py>, spikes: &Bound<'py, PyAny>, max_gap: f64) -> PyResult<Bound<'py, PyAny>> {
    let found: Vec<Spike> = from_py(Some(spikes), "spikes")?;
    let trains: Vec<serde_json::Value> = spikes::group_trains(&found, max_gap)
        .into_iter()
        .map(|t| {
            serde_json::json!({
                "count": t.spikes.len(),
                "mean_width": t.mean_width,
                "mean_amplitude": t.mean_amplitude,
                "mean_inter_spike_interval": t.mean_inter_spike_interval,
                "class": spikes::classify_train(&t).ok(),
            })
        })
        .collect();
    to_py(py, &trains)
}

#[pyfunction]
fn compare_stimulus_responses<'py>(
    py: Python<'py>,
    on: &Bound<'py, PyAny>,
    off: &Bound<'py, PyAny>,
) -> PyResult<Bound<'py, PyAny>> {
    let on: Vec<Spike> = from_py(Some(on), "spikes")?;
    let off: Vec<Spike> = from_py(Some(off), "spikes")?;
    let c = spikes::compare_stimulus_responses(&on, &off).map_err(|e| err("spikes", e))?;
    to_py(py, &c)
}

/// `params` keys follow `ShiftParams`.
#[pyfunction]
#[pyo3(signature = (recording, params=None))]
fn detect_baseline_shift<'py>(
    py: Python<'py>,
    recording: &PyRecording,
    params: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let params: ShiftParams = from_py(params, "shift params")?;
    let shifts = spikes::detect_baseline_shift(&recording.inner, &params).map_err(|e| err("spikes", e))?;
    to_py(py, &shifts)
}

#[pymodule]
fn mycoelec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyNetlist>()?;
    m.add_class::<PyHistogram>()?;
    m.add_class::<PyRecording>()?;
    m.add_function(wrap_pyfunction!(mine_gates, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(cv_sweep_curve, m)?)?;
    m.add_function(wrap_pyfunction!(detect_spikes, m)?)?;
    m.add_function(wrap_pyfunction!(spike_trains, m)?)?;
    m.add_function(wrap_pyfunction!(compare_stimulus_responses, m)?)?;
    m.add_function(wrap_pyfunction!(detect_baseline_shift, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
