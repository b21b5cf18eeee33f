//! RC and memristive netlists built over spatial graphs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NodeId, SpatialGraph};
use crate::memristor::MemristorModel;
use crate::solver::{Method, PulseSpec, TransientConfig};

/// Index 0 is ground.
pub const GROUND: usize = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("graph has {0} nodes; at least 2 are required")]
    GraphTooSmall(usize),
    #[error("edge ({u}, {v}) yields non-finite or non-positive element values")]
    NonFiniteElement { u: NodeId, v: NodeId },
    #[error("invalid RC parameters: {0}")]
    InvalidParams(String),
    #[error("element {index} references node {node} but the netlist has {node_count} nodes")]
    NodeOutOfRange {
        index: usize,
        node: usize,
        node_count: usize,
    },
    #[error("element {0} has a non-positive or non-finite value")]
    BadValue(usize),
    #[error("node {0} has no resistive path to ground")]
    FloatingNode(usize),
    #[error("memristor export unsupported")]
    MemristorExportUnsupported,
    #[error("invalid pulse source: {0}")]
    InvalidSource(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Each edge is a resistor in series with a capacitor through an
    /// internal junction node.
    Serial,
    /// Each edge is a resistor in parallel with a capacitor.
    Parallel,
}

impl std::str::FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "serial" => Ok(Topology::Serial),
            "parallel" => Ok(Topology::Parallel),
            _ => Err(format!("unknown topology `{s}`; expected serial or parallel")),
        }
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Topology::Serial => "serial",
            Topology::Parallel => "parallel",
        })
    }
}

/// Per-edge element values scale with edge length: `R = rho·L`, `C = kappa·L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RcParams {
    /// Ohms per micrometer.
    pub rho: f64,
    /// Farads per micrometer.
    pub kappa: f64,
    pub topology: Topology,
    /// Leak conductance from every node to ground, siemens.
    pub gmin: f64,
}

impl Default for RcParams {
    fn default() -> Self {
        Self {
            rho: 10.0,
            kappa: 1e-14,
            topology: Topology::Parallel,
            gmin: 1e-12,
        }
    }
}

impl RcParams {
    pub fn validate(&self) -> Result<(), CircuitError> {
        let bad = |m: &str| Err(CircuitError::InvalidParams(m.to_string()));
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return bad("rho must be positive");
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return bad("kappa must be positive");
        }
        if !(self.gmin.is_finite() && self.gmin >= 0.0) {
            return bad("gmin must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Element {
    Resistor { a: usize, b: usize, ohms: f64 },
    Capacitor { a: usize, b: usize, farads: f64 },
    Memristor { a: usize, b: usize, model: MemristorModel },
    /// Voltage source from `node` to ground.
    Pulse { node: usize, pulse: PulseSpec },
}

impl Element {
    fn nodes(&self) -> [usize; 2] {
        match *self {
            Element::Resistor { a, b, .. }
            | Element::Capacitor { a, b, .. }
            | Element::Memristor { a, b, .. } => [a, b],
            Element::Pulse { node, .. } => [node, GROUND],
        }
    }
}

/// Where a netlist node came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeOrigin {
    Graph { id: NodeId },
    /// Internal junction of a serial edge.
    Junction { u: NodeId, v: NodeId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Netlist {
    pub node_count: usize,
    pub elements: Vec<Element>,
    /// One entry per node.
    pub origin: Vec<NodeOrigin>,
    /// Leak conductance attached from every non-ground node to ground.
    pub gmin: f64,
}

impl Netlist {
    pub fn validate(&self) -> Result<(), CircuitError> {
        self.validate_driven(&[])
    }

    /// Like [`Netlist::validate`], treating `driven` nodes as tied to ground
    /// through external sources.
    pub fn validate_driven(&self, driven: &[usize]) -> Result<(), CircuitError> {
        if self.origin.len() != self.node_count {
            return Err(CircuitError::InvalidParams(format!(
                "origin map has {} entries for {} nodes",
                self.origin.len(),
                self.node_count
            )));
        }
        if !(self.gmin.is_finite() && self.gmin >= 0.0) {
            return Err(CircuitError::InvalidParams("gmin must be non-negative".into()));
        }
        for (index, e) in self.elements.iter().enumerate() {
            for node in e.nodes() {
                if node >= self.node_count {
                    return Err(CircuitError::NodeOutOfRange {
                        index,
                        node,
                        node_count: self.node_count,
                    });
                }
            }
            let ok = match e {
                Element::Resistor { ohms, .. } => ohms.is_finite() && *ohms > 0.0,
                Element::Capacitor { farads, .. } => farads.is_finite() && *farads > 0.0,
                Element::Memristor { model, .. } => model.validate().is_ok(),
                Element::Pulse { node, pulse } => *node != GROUND && pulse.validate().is_ok(),
            };
            if !ok {
                return Err(CircuitError::BadValue(index));
            }
        }
        if let Some(n) = self.floating_nodes_driven(driven).first() {
            return Err(CircuitError::FloatingNode(*n));
        }
        Ok(())
    }

    /// Nodes not connected to ground through resistors, memristors, sources
    /// or leaks.
    pub fn floating_nodes(&self) -> Vec<usize> {
        self.floating_nodes_driven(&[])
    }

    fn floating_nodes_driven(&self, driven: &[usize]) -> Vec<usize> {
        if self.gmin > 0.0 {
            return Vec::new();
        }
        let mut parent: Vec<usize> = (0..self.node_count).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.elements {
            if matches!(e, Element::Capacitor { .. }) {
                continue;
            }
            let [a, b] = e.nodes();
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
        for &d in driven.iter().filter(|&&d| d < self.node_count) {
            let (ra, rb) = (find(&mut parent, d), find(&mut parent, GROUND));
            parent[ra] = rb;
        }
        let g = find(&mut parent, GROUND);
        (0..self.node_count)
            .filter(|&n| find(&mut parent, n) != g)
            .collect()
    }

    /// Netlist node carrying graph node `id`.
    pub fn node_of(&self, id: NodeId) -> Option<usize> {
        self.origin
            .iter()
            .position(|o| *o == NodeOrigin::Graph { id })
    }

    /// Copy of the netlist with `node` moved to index 0, i.e. grounded.
    /// The former ground takes `node`'s old index.
    pub fn with_ground(&self, node: usize) -> Netlist {
        let mut out = self.clone();
        if node == GROUND {
            return out;
        }
        let swap = |x: usize| match x {
            GROUND => node,
            n if n == node => GROUND,
            n => n,
        };
        for e in &mut out.elements {
            match e {
                Element::Resistor { a, b, .. }
                | Element::Capacitor { a, b, .. }
                | Element::Memristor { a, b, .. } => {
                    *a = swap(*a);
                    *b = swap(*b);
                }
                Element::Pulse { node: n, .. } => *n = swap(*n),
            }
        }
        out.origin.swap(GROUND, node);
        out
    }

    pub fn add_pulse_source(&mut self, node: usize, pulse: PulseSpec) {
        self.elements.push(Element::Pulse { node, pulse });
    }

    pub fn has_memristors(&self) -> bool {
        self.elements
            .iter()
            .any(|e| matches!(e, Element::Memristor { .. }))
    }

    pub fn resistors(&self) -> impl Iterator<Item = f64> + '_ {
        self.elements.iter().filter_map(|e| match e {
            Element::Resistor { ohms, .. } => Some(*ohms),
            _ => None,
        })
    }

    pub fn capacitors(&self) -> impl Iterator<Item = f64> + '_ {
        self.elements.iter().filter_map(|e| match e {
            Element::Capacitor { farads, .. } => Some(*farads),
            _ => None,
        })
    }
}

/// Converts a spatial graph into an RC netlist.
///
/// Graph nodes take netlist indices `0..N` in ascending id order, so the
/// smallest id starts out as ground; callers pick the real ground with
/// [`Netlist::with_ground`]. Serial junction nodes follow at `N..N+E` in
/// edge order.
pub fn build_rc_network(graph: &SpatialGraph, params: &RcParams) -> Result<Netlist, CircuitError> {
    params.validate()?;
    if graph.node_count() < 2 {
        return Err(CircuitError::GraphTooSmall(graph.node_count()));
    }
    let mut origin: Vec<NodeOrigin> = graph
        .nodes()
        .iter()
        .map(|n| NodeOrigin::Graph { id: n.id })
        .collect();
    let mut elements = Vec::with_capacity(graph.edge_count() * 2);
    for e in graph.edges() {
        let ohms = params.rho * e.length;
        let farads = params.kappa * e.length;
        if !(ohms.is_finite() && farads.is_finite() && ohms > 0.0 && farads > 0.0) {
            return Err(CircuitError::NonFiniteElement { u: e.u, v: e.v });
        }
        let a = graph.index_of(e.u).expect("validated graph");
        let b = graph.index_of(e.v).expect("validated graph");
        match params.topology {
            Topology::Parallel => {
                elements.push(Element::Resistor { a, b, ohms });
                elements.push(Element::Capacitor { a, b, farads });
            }
            Topology::Serial => {
                let m = origin.len();
                origin.push(NodeOrigin::Junction { u: e.u, v: e.v });
                elements.push(Element::Resistor { a, b: m, ohms });
                elements.push(Element::Capacitor { a: m, b, farads });
            }
        }
    }
    let netlist = Netlist {
        node_count: origin.len(),
        elements,
        origin,
        gmin: params.gmin,
    };
    netlist.validate()?;
    Ok(netlist)
}

fn non_repeating_period(p: &PulseSpec, config: &TransientConfig) -> f64 {
    if p.period > 0.0 {
        p.period
    } else {
        p.delay + p.rise + p.width + p.fall + config.t_stop
    }
}

/// Emits SPICE-style netlist text for cross-checking with external
/// simulators. Leaks are written as extra resistors to ground; single
/// pulses get a period longer than the simulated window.
pub fn export_netlist_text(
    netlist: &Netlist,
    sources: &[(usize, PulseSpec)],
    config: &TransientConfig,
) -> Result<String, CircuitError> {
    if netlist.has_memristors() {
        return Err(CircuitError::MemristorExportUnsupported);
    }
    let driven: Vec<usize> = sources.iter().map(|&(node, _)| node).collect();
    netlist.validate_driven(&driven)?;
    for (node, pulse) in sources {
        if *node == GROUND || *node >= netlist.node_count {
            return Err(CircuitError::InvalidSource(format!("node {node}")));
        }
        pulse
            .validate()
            .map_err(|e| CircuitError::InvalidSource(e.to_string()))?;
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        "* mycoelec netlist: {} nodes, {} elements",
        netlist.node_count,
        netlist.elements.len()
    );
    let (mut nr, mut nc, mut nv) = (0, 0, 0);
    let mut pulses: Vec<(usize, PulseSpec)> = Vec::new();
    for e in &netlist.elements {
        match e {
            Element::Resistor { a, b, ohms } => {
                nr += 1;
                let _ = writeln!(out, "R{nr} {a} {b} {ohms}");
            }
            Element::Capacitor { a, b, farads } => {
                nc += 1;
                let _ = writeln!(out, "C{nc} {a} {b} {farads}");
            }
            Element::Pulse { node, pulse } => pulses.push((*node, *pulse)),
            Element::Memristor { .. } => unreachable!(),
        }
    }
    if netlist.gmin > 0.0 {
        let leak = 1.0 / netlist.gmin;
        for n in 1..netlist.node_count {
            nr += 1;
            let _ = writeln!(out, "R{nr} {n} 0 {leak}");
        }
    }
    pulses.extend_from_slice(sources);
    for (node, p) in &pulses {
        nv += 1;
        let _ = writeln!(
            out,
            "V{nv} {node} 0 PULSE(0 {} {} {} {} {} {})",
            p.amplitude,
            p.delay,
            p.rise,
            p.fall,
            p.width,
            non_repeating_period(p, config)
        );
    }
    if config.method == Method::BackwardEuler {
        let _ = writeln!(out, ".options method=gear maxord=1");
    }
    let _ = writeln!(out, ".tran {} {} 0 {} uic", config.dt, config.t_stop, config.dt);
    out.push_str(".end\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{load_graph, Node};
    use proptest::prelude::*;

    fn path(lengths: &[f64]) -> SpatialGraph {
        let nodes = (0..=lengths.len())
            .map(|i| Node {
                id: i as NodeId,
                position: [i as f64 * 10.0, 0.0, 0.0],
            })
            .collect();
        let edges = lengths
            .iter()
            .enumerate()
            .map(|(i, &l)| (i as NodeId, i as NodeId + 1, Some(l)));
        SpatialGraph::new(nodes, edges).unwrap()
    }

    #[test]
    fn parallel_single_edge() {
        let n = build_rc_network(&path(&[100.0]), &RcParams::default()).unwrap();
        assert_eq!(n.node_count, 2);
        let r: Vec<f64> = n.resistors().collect();
        let c: Vec<f64> = n.capacitors().collect();
        assert_eq!(r.len(), 1);
        assert_eq!(c.len(), 1);
        assert!((r[0] - 1e3).abs() < 1e-9);
        assert!((c[0] - 1e-12).abs() < 1e-24);
        assert!(matches!(n.elements[0], Element::Resistor { a: 0, b: 1, .. }));
        assert!(matches!(n.elements[1], Element::Capacitor { a: 0, b: 1, .. }));
    }

    #[test]
    fn serial_single_edge() {
        let params = RcParams {
            topology: Topology::Serial,
            ..Default::default()
        };
        let n = build_rc_network(&path(&[100.0]), &params).unwrap();
        assert_eq!(n.node_count, 3);
        assert!(matches!(n.elements[0], Element::Resistor { a: 0, b: 2, .. }));
        assert!(matches!(n.elements[1], Element::Capacitor { a: 2, b: 1, .. }));
        assert_eq!(n.origin[2], NodeOrigin::Junction { u: 0, v: 1 });
    }

    #[test]
    fn parallel_path_has_no_junctions() {
        let n = build_rc_network(&path(&[50.0, 60.0, 70.0]), &RcParams::default()).unwrap();
        assert_eq!(n.node_count, 4);
        assert_eq!(n.resistors().count(), 3);
        assert_eq!(n.capacitors().count(), 3);
    }

    #[test]
    fn serial_without_leak_floats() {
        let params = RcParams {
            topology: Topology::Serial,
            gmin: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            build_rc_network(&path(&[100.0, 100.0]), &params),
            Err(CircuitError::FloatingNode(_))
        ));
        let params = RcParams {
            gmin: 0.0,
            ..Default::default()
        };
        assert!(build_rc_network(&path(&[100.0, 100.0]), &params).is_ok());
    }

    #[test]
    fn too_small_graph() {
        let g = load_graph("# mycograph v1\nN 0 0 0 0\n").unwrap();
        assert_eq!(
            build_rc_network(&g, &RcParams::default()),
            Err(CircuitError::GraphTooSmall(1))
        );
    }

    #[test]
    fn regrounding_swaps_indices() {
        let n = build_rc_network(&path(&[100.0, 200.0]), &RcParams::default()).unwrap();
        let g = n.with_ground(2);
        assert_eq!(g.origin[0], NodeOrigin::Graph { id: 2 });
        assert_eq!(g.origin[2], NodeOrigin::Graph { id: 0 });
        assert_eq!(g.node_of(2), Some(0));
        assert!(matches!(g.elements[0], Element::Resistor { a: 2, b: 1, .. }));
        assert!(matches!(g.elements[2], Element::Resistor { a: 1, b: 0, .. }));
        assert_eq!(g.with_ground(2), n);
    }

    #[test]
    fn export_format() {
        let n = build_rc_network(&path(&[100.0]), &RcParams::default()).unwrap();
        let text = export_netlist_text(
            &n.with_ground(1),
            &[(1, PulseSpec::default())],
            &TransientConfig::default(),
        )
        .unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "R1 1 0 1000");
        assert!(lines[2].starts_with("C1 1 0 0.000000000001"));
        assert!(text.contains("R2 1 0 1000000000000"));
        assert!(text.contains("V1 1 0 PULSE(0 0.06 "));
        assert!(text.contains(".tran 0.00000005 0.0002 0 0.00000005 uic"));
        assert!(text.ends_with(".end\n"));
    }

    #[test]
    fn memristor_export_rejected() {
        let mut n = build_rc_network(&path(&[100.0]), &RcParams::default()).unwrap();
        n.elements.push(Element::Memristor {
            a: 0,
            b: 1,
            model: MemristorModel::default(),
        });
        assert_eq!(
            export_netlist_text(&n, &[], &TransientConfig::default()),
            Err(CircuitError::MemristorExportUnsupported)
        );
    }

    #[test]
    fn magnitude_bands() {
        let lengths: Vec<f64> = (0..46).map(|k| 50.0 + 10.0 * k as f64).collect();
        let n = build_rc_network(&path(&lengths), &RcParams::default()).unwrap();
        assert!(n.resistors().all(|r| (500.0..=5000.0).contains(&r)));
        assert!(n.capacitors().all(|c| (0.5e-12..=5e-12).contains(&c)));
    }

    proptest! {
        #[test]
        fn node_counts_and_linearity(lengths in proptest::collection::vec(1.0f64..1000.0, 1..30),
                                     serial in any::<bool>()) {
            let params = RcParams {
                topology: if serial { Topology::Serial } else { Topology::Parallel },
                ..Default::default()
            };
            let g = path(&lengths);
            let n = build_rc_network(&g, &params).unwrap();
            let expected = if serial { g.node_count() + g.edge_count() } else { g.node_count() };
            prop_assert_eq!(n.node_count, expected);

            let doubled: Vec<f64> = lengths.iter().map(|l| 2.0 * l).collect();
            let n2 = build_rc_network(&path(&doubled), &params).unwrap();
            for (a, b) in n.resistors().zip(n2.resistors()) {
                prop_assert!((b - 2.0 * a).abs() <= 1e-12 * b);
            }
            for (a, b) in n.capacitors().zip(n2.capacitors()) {
                prop_assert!((b - 2.0 * a).abs() <= 1e-12 * b);
            }
        }
    }
}
