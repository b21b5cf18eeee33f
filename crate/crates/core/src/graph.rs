//! 3D spatial graphs standing in for a mycelium colony.
//!
//! Graphs are loaded from a small line-oriented text format or grown
//! synthetically by a seeded branching random walk. Node positions are in
//! micrometers; edge lengths drive the element values of the circuit
//! builder downstream.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u64;

const HEADER: &str = "# mycograph v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate node {0}")]
    DuplicateNode(NodeId),
    #[error("unknown endpoint {node} in edge ({u}, {v})")]
    UnknownEndpoint { node: NodeId, u: NodeId, v: NodeId },
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(NodeId, NodeId),
    #[error("edge ({u}, {v}) has non-positive or non-finite length {length}")]
    BadLength { u: NodeId, v: NodeId, length: f64 },
    #[error("node {0} has a non-finite coordinate")]
    BadPosition(NodeId),
    #[error("graph is empty")]
    Empty,
    #[error("invalid colony spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    /// Position in micrometers.
    pub position: [f64; 3],
}

/// Undirected edge, stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    /// Length in micrometers.
    pub length: f64,
}

/// A validated undirected spatial graph.
///
/// Nodes are kept sorted by id and edges sorted by `(u, v)` with `u < v`,
/// so two graphs with the same content compare and serialize identically.
#[derive(Debug, Clone)]
pub struct SpatialGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    index: HashMap<NodeId, usize>,
}

impl PartialEq for SpatialGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

impl SpatialGraph {
    /// Builds a graph, filling omitted lengths with the Euclidean distance
    /// between endpoints and checking every invariant.
    pub fn new(
        nodes: Vec<Node>,
        edges: impl IntoIterator<Item = (NodeId, NodeId, Option<f64>)>,
    ) -> Result<Self, GraphError> {
        let mut nodes = nodes;
        nodes.sort_by_key(|n| n.id);
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if n.position.iter().any(|c| !c.is_finite()) {
                return Err(GraphError::BadPosition(n.id));
            }
            if index.insert(n.id, i).is_some() {
                return Err(GraphError::DuplicateNode(n.id));
            }
        }

        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (a, b, length) in edges {
            for node in [a, b] {
                if !index.contains_key(&node) {
                    return Err(GraphError::UnknownEndpoint { node, u: a, v: b });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((u, v)) {
                return Err(GraphError::DuplicateEdge(u, v));
            }
            let length = length.unwrap_or_else(|| {
                distance(nodes[index[&u]].position, nodes[index[&v]].position)
            });
            if !(length.is_finite() && length > 0.0) {
                return Err(GraphError::BadLength { u, v, length });
            }
            out.push(Edge { u, v, length });
        }
        out.sort_by_key(|e| (e.u, e.v));

        Ok(Self {
            nodes,
            edges: out,
            index,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Position of `id` in the sorted node list.
    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    pub fn mean_degree(&self) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        2.0 * self.edges.len() as f64 / self.nodes.len() as f64
    }

    /// Adjacency lists indexed by sorted node position.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            let (a, b) = (self.index_of(e.u).unwrap(), self.index_of(e.v).unwrap());
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Connected components as lists of sorted node positions, each list
    /// ascending.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.nodes.len()];
        let mut comps = Vec::new();
        for start in 0..self.nodes.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(n) = queue.pop_front() {
                for &m in &adj[n] {
                    if !seen[m] {
                        seen[m] = true;
                        comp.push(m);
                        queue.push_back(m);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Serializes to the `mycograph v1` text format.
    pub fn to_text(&self) -> String {
        let mut s = String::from(HEADER);
        s.push('\n');
        for n in &self.nodes {
            let [x, y, z] = n.position;
            let _ = writeln!(s, "N {} {} {} {}", n.id, x, y, z);
        }
        for e in &self.edges {
            let _ = writeln!(s, "E {} {} {}", e.u, e.v, e.length);
        }
        s
    }

    fn induced(&self, keep: &[usize]) -> SpatialGraph {
        let ids: HashSet<NodeId> = keep.iter().map(|&i| self.nodes[i].id).collect();
        let nodes = keep.iter().map(|&i| self.nodes[i]).collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| ids.contains(&e.u) && ids.contains(&e.v))
            .map(|e| (e.u, e.v, Some(e.length)));
        SpatialGraph::new(nodes, edges).expect("subgraph of a valid graph is valid")
    }
}

/// Parses and validates a graph in the `mycograph v1` text format.
pub fn load_graph(source: &str) -> Result<SpatialGraph, GraphError> {
    let mut lines = source.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim() == HEADER => {}
        _ => {
            return Err(GraphError::Parse {
                line: 1,
                message: format!("expected header `{HEADER}`"),
            })
        }
    }

    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (i, raw) in lines {
        let line_no = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| GraphError::Parse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = content.split_whitespace().collect();
        match fields[0] {
            "N" => {
                if fields.len() != 5 {
                    return Err(err(format!(
                        "node line needs `N <id> <x> <y> <z>`, got {} fields",
                        fields.len()
                    )));
                }
                let id = parse_id(fields[1]).map_err(err)?;
                let mut pos = [0.0; 3];
                for (k, f) in fields[2..].iter().enumerate() {
                    pos[k] = parse_float(f).map_err(err)?;
                }
                nodes.push(Node { id, position: pos });
            }
            "E" => {
                if !(3..=4).contains(&fields.len()) {
                    return Err(err(format!(
                        "edge line needs `E <u> <v> [length]`, got {} fields",
                        fields.len()
                    )));
                }
                let u = parse_id(fields[1]).map_err(err)?;
                let v = parse_id(fields[2]).map_err(err)?;
                let length = match fields.get(3) {
                    Some(f) => Some(parse_float(f).map_err(err)?),
                    None => None,
                };
                edges.push((u, v, length));
            }
            other => return Err(err(format!("unknown record type `{other}`"))),
        }
    }
    SpatialGraph::new(nodes, edges)
}

fn parse_id(s: &str) -> Result<NodeId, String> {
    s.parse().map_err(|_| format!("invalid node id `{s}`"))
}

fn parse_float(s: &str) -> Result<f64, String> {
    s.parse().map_err(|_| format!("invalid number `{s}`"))
}

/// Subgraph induced by the largest connected component. Ties go to the
/// component holding the smallest node id.
pub fn largest_component(graph: &SpatialGraph) -> SpatialGraph {
    let comps = graph.components();
    // components() is generated in ascending order of their smallest member,
    // so the first maximum wins the tie-break.
    let best = comps
        .iter()
        .fold(None::<&Vec<usize>>, |best, c| match best {
            Some(b) if b.len() >= c.len() => Some(b),
            _ => Some(c),
        });
    match best {
        Some(c) if c.len() == graph.node_count() => graph.clone(),
        Some(c) => graph.induced(c),
        None => graph.clone(),
    }
}

/// Parameters of the synthetic colony generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColonySpec {
    pub node_budget: usize,
    pub branching_probability: f64,
    pub anastomosis_probability: f64,
    /// Mean hyphal step length in micrometers.
    pub step_length_mean: f64,
    /// Relative jitter: steps are drawn uniformly from `mean * (1 ± jitter)`.
    pub step_length_jitter: f64,
    pub seed: u64,
}

impl Default for ColonySpec {
    fn default() -> Self {
        Self {
            node_budget: 200,
            branching_probability: 0.3,
            anastomosis_probability: 0.1,
            step_length_mean: 100.0,
            step_length_jitter: 0.5,
            seed: 42,
        }
    }
}

impl ColonySpec {
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |m: &str| Err(GraphError::InvalidSpec(m.to_string()));
        if self.node_budget < 2 {
            return bad("node_budget must be at least 2");
        }
        for (name, p) in [
            ("branching_probability", self.branching_probability),
            ("anastomosis_probability", self.anastomosis_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GraphError::InvalidSpec(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.step_length_mean.is_finite() && self.step_length_mean > 0.0) {
            return bad("step_length_mean must be positive");
        }
        if !(0.0..1.0).contains(&self.step_length_jitter) {
            return bad("step_length_jitter must lie in [0, 1)");
        }
        Ok(())
    }
}

struct Tip {
    node: usize,
    heading: [f64; 3],
}

/// Uniform grid over positions for nearest-node queries within one cell.
struct Grid {
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<usize>>,
}

impl Grid {
    fn key(&self, p: [f64; 3]) -> [i64; 3] {
        p.map(|c| (c / self.cell).floor() as i64)
    }

    fn insert(&mut self, idx: usize, p: [f64; 3]) {
        self.buckets.entry(self.key(p)).or_default().push(idx);
    }

    /// Nearest indexed point within `radius` (≤ cell size), skipping `exclude`.
    fn nearest(
        &self,
        p: [f64; 3],
        radius: f64,
        positions: &[[f64; 3]],
        exclude: &[usize],
    ) -> Option<usize> {
        let k = self.key(p);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = self.buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else {
                        continue;
                    };
                    for &i in bucket {
                        if exclude.contains(&i) {
                            continue;
                        }
                        let d = distance(p, positions[i]);
                        if d > 0.0 && d <= radius && best.is_none_or(|(bd, bi)| (d, i) < (bd, bi)) {
                            best = Some((d, i));
                        }
                    }
                }
            }
        }
        best.map(|(_, i)| i)
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return v.map(|c| c / n);
        }
    }
}

fn normalized(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.map(|c| c / n)
}

/// Grows a connected colony by a seeded 3D branching random walk.
///
/// Starting from a single origin node, every active tip extends by one edge
/// per iteration along a persistent, slightly perturbed heading. The new
/// node may spawn an extra tip (branching) and may fuse with the nearest
/// existing node within one mean step length (anastomosis), which ends that
/// tip. Growth stops once `node_budget` nodes exist.
pub fn generate_colony(spec: &ColonySpec) -> Result<SpatialGraph, GraphError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut positions: Vec<[f64; 3]> = vec![[0.0; 3]];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut edge_set: HashSet<(usize, usize)> = HashSet::new();
    let mut grid = Grid {
        cell: spec.step_length_mean,
        buckets: HashMap::new(),
    };
    grid.insert(0, positions[0]);
    let mut tips = vec![Tip {
        node: 0,
        heading: random_unit(&mut rng),
    }];

    let mut add_edge = |edges: &mut Vec<(usize, usize)>, a: usize, b: usize| -> bool {
        let key = (a.min(b), a.max(b));
        if a != b && edge_set.insert(key) {
            edges.push(key);
            true
        } else {
            false
        }
    };

    while positions.len() < spec.node_budget {
        if tips.is_empty() {
            // every tip fused; resume from a random existing node
            let node = rng.random_range(0..positions.len());
            tips.push(Tip {
                node,
                heading: random_unit(&mut rng),
            });
        }
        let mut next = Vec::with_capacity(tips.len() * 2);
        for tip in tips {
            if positions.len() >= spec.node_budget {
                break;
            }
            let wobble = random_unit(&mut rng);
            let heading = normalized([
                tip.heading[0] + 0.5 * wobble[0],
                tip.heading[1] + 0.5 * wobble[1],
                tip.heading[2] + 0.5 * wobble[2],
            ]);
            let jitter = rng.random_range(-1.0..=1.0) * spec.step_length_jitter;
            let step = spec.step_length_mean * (1.0 + jitter);
            let origin = positions[tip.node];
            let pos = [
                origin[0] + heading[0] * step,
                origin[1] + heading[1] * step,
                origin[2] + heading[2] * step,
            ];
            let new = positions.len();
            positions.push(pos);
            add_edge(&mut edges, tip.node, new);

            let branches = rng.random_bool(spec.branching_probability);
            let fuses = rng.random_bool(spec.anastomosis_probability);
            let mut alive = true;
            if fuses {
                if let Some(target) =
                    grid.nearest(pos, spec.step_length_mean, &positions, &[new, tip.node])
                {
                    alive = !add_edge(&mut edges, new, target);
                }
            }
            grid.insert(new, pos);
            if branches {
                let side = random_unit(&mut rng);
                next.push(Tip {
                    node: new,
                    heading: normalized([
                        heading[0] + side[0],
                        heading[1] + side[1],
                        heading[2] + side[2],
                    ]),
                });
            }
            if alive {
                next.push(Tip { node: new, heading });
            }
        }
        tips = next;
    }

    let nodes = positions
        .iter()
        .enumerate()
        .map(|(i, &p)| Node {
            id: i as NodeId,
            position: p,
        })
        .collect();
    let lengths: BTreeMap<(usize, usize), f64> = edges
        .iter()
        .map(|&(a, b)| ((a, b), distance(positions[a], positions[b])))
        .collect();
    SpatialGraph::new(
        nodes,
        lengths
            .into_iter()
            .map(|((a, b), l)| (a as NodeId, b as NodeId, Some(l))),
    )
}
