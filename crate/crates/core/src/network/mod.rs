//! Track graph: typed nodes, typed one-way segments, station and capacitor specs.
//!
//! A [`Network`] is only ever produced by [`NetworkBuilder::build`], which
//! validates every structural rule, so downstream code can rely on the degree
//! constraints and on every station/capacitor reaching every other one.

mod city;
mod format;
mod path;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

pub use city::{build_city_benchmark, CITY_CAPACITOR_CAPACITY};
pub use format::{emit_network, parse_network};
pub use path::{nominal_route_time, shortest_route, Route, RouteError};

/// Minimum separation between vehicles; also the shortest legal segment.
pub const MIN_SEGMENT_LENGTH: f64 = 10.0;
pub const ROAD_VMAX: f64 = 10.0;
pub const HIGHWAY_VMAX: f64 = 15.0;
pub const DEFAULT_BERTHS: u32 = 5;
pub const DEFAULT_CAPACITOR_CAPACITY: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeIdx(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegIdx(pub u32);

impl NodeIdx {
    #[inline]
    pub fn ix(self) -> usize {
        self.0 as usize
    }
}

impl SegIdx {
    #[inline]
    pub fn ix(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Station,
    Capacitor,
    Fork,
    Join,
    Plain,
}

impl NodeKind {
    /// Required (in-degree, out-degree).
    pub fn degrees(self) -> (usize, usize) {
        match self {
            NodeKind::Fork => (1, 2),
            NodeKind::Join => (2, 1),
            NodeKind::Station | NodeKind::Capacitor | NodeKind::Plain => (1, 1),
        }
    }

    /// Stations and capacitors are terminals: vehicles stop there, so routes
    /// may start or end at them but never pass through.
    pub fn is_terminal(self) -> bool {
        matches!(self, NodeKind::Station | NodeKind::Capacitor)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Station => "station",
            NodeKind::Capacitor => "capacitor",
            NodeKind::Fork => "fork",
            NodeKind::Join => "join",
            NodeKind::Plain => "plain",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentClass {
    Road,
    Highway,
}

impl SegmentClass {
    pub fn default_vmax(self) -> f64 {
        match self {
            SegmentClass::Road => ROAD_VMAX,
            SegmentClass::Highway => HIGHWAY_VMAX,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SegmentClass::Road => "road",
            SegmentClass::Highway => "highway",
        }
    }
}

impl fmt::Display for SegmentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub pos: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: String,
    pub from: NodeIdx,
    pub to: NodeIdx,
    pub length: f64,
    pub class: SegmentClass,
    pub v_max: f64,
}

impl Segment {
    /// Travel time at the speed limit.
    #[inline]
    pub fn nominal_time(&self) -> f64 {
        self.length / self.v_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StationSpec {
    pub berths: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapacitorSpec {
    pub capacity: u32,
}

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("duplicate {what} id `{id}`")]
    DuplicateId { what: &'static str, id: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{node}` ({kind}) has in-degree {in_deg} and out-degree {out_deg}, expected {exp_in}/{exp_out}")]
    Degree {
        node: String,
        kind: NodeKind,
        in_deg: usize,
        out_deg: usize,
        exp_in: usize,
        exp_out: usize,
    },
    #[error("highway segment `{segment}` touches {kind} `{node}`")]
    HighwayAtTerminal {
        segment: String,
        node: String,
        kind: NodeKind,
    },
    #[error("segment `{segment}`: {message}")]
    BadSegment { segment: String, message: String },
    #[error("`{node}` is not a {expected} node")]
    WrongKind { node: String, expected: NodeKind },
    #[error("`{from}` cannot reach `{to}`")]
    Unreachable { from: String, to: String },
    #[error("network has no stations")]
    NoStations,
}

/// Immutable, validated track graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<Node>,
    segments: Vec<Segment>,
    node_index: HashMap<String, NodeIdx>,
    seg_index: HashMap<String, SegIdx>,
    out_segs: Vec<Vec<SegIdx>>,
    in_segs: Vec<Vec<SegIdx>>,
    stations: BTreeMap<NodeIdx, StationSpec>,
    capacitors: BTreeMap<NodeIdx, CapacitorSpec>,
    /// Position of each segment in id order, used for deterministic tie-breaks.
    seg_rank: Vec<u32>,
}

impl Network {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    #[inline]
    pub fn node(&self, n: NodeIdx) -> &Node {
        &self.nodes[n.ix()]
    }

    #[inline]
    pub fn segment(&self, s: SegIdx) -> &Segment {
        &self.segments[s.ix()]
    }

    pub fn node_by_id(&self, id: &str) -> Option<NodeIdx> {
        self.node_index.get(id).copied()
    }

    pub fn segment_by_id(&self, id: &str) -> Option<SegIdx> {
        self.seg_index.get(id).copied()
    }

    #[inline]
    pub fn out_segments(&self, n: NodeIdx) -> &[SegIdx] {
        &self.out_segs[n.ix()]
    }

    #[inline]
    pub fn in_segments(&self, n: NodeIdx) -> &[SegIdx] {
        &self.in_segs[n.ix()]
    }

    pub fn stations(&self) -> &BTreeMap<NodeIdx, StationSpec> {
        &self.stations
    }

    pub fn capacitors(&self) -> &BTreeMap<NodeIdx, CapacitorSpec> {
        &self.capacitors
    }

    pub fn station_nodes(&self) -> Vec<NodeIdx> {
        self.stations.keys().copied().collect()
    }

    pub fn capacitor_nodes(&self) -> Vec<NodeIdx> {
        self.capacitors.keys().copied().collect()
    }

    #[inline]
    pub fn seg_rank(&self, s: SegIdx) -> u32 {
        self.seg_rank[s.ix()]
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn max_vmax(&self) -> f64 {
        self.segments.iter().map(|s| s.v_max).fold(0.0, f64::max)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }
}

/// Incremental constructor; `build` runs all validation.
#[derive(Debug, Default, Clone)]
pub struct NetworkBuilder {
    nodes: Vec<Node>,
    segments: Vec<(String, String, String, f64, SegmentClass, Option<f64>)>,
    stations: Vec<(String, StationSpec)>,
    capacitors: Vec<(String, CapacitorSpec)>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&mut self, id: impl Into<String>, kind: NodeKind, pos: Option<(f64, f64)>) -> &mut Self {
        self.nodes.push(Node {
            id: id.into(),
            kind,
            pos,
        });
        self
    }

    pub fn segment(
        &mut self,
        id: impl Into<String>,
        from: impl Into<String>,
        to: impl Into<String>,
        length: f64,
        class: SegmentClass,
        v_max: Option<f64>,
    ) -> &mut Self {
        self.segments
            .push((id.into(), from.into(), to.into(), length, class, v_max));
        self
    }

    pub fn station(&mut self, node: impl Into<String>, berths: u32) -> &mut Self {
        self.stations.push((node.into(), StationSpec { berths }));
        self
    }

    pub fn capacitor(&mut self, node: impl Into<String>, capacity: u32) -> &mut Self {
        self.capacitors.push((node.into(), CapacitorSpec { capacity }));
        self
    }

    pub fn build(self) -> Result<Network, NetworkError> {
        let mut node_index = HashMap::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            if node_index.insert(n.id.clone(), NodeIdx(i as u32)).is_some() {
                return Err(NetworkError::DuplicateId {
                    what: "node",
                    id: n.id.clone(),
                });
            }
        }
        let lookup = |id: &str| {
            node_index
                .get(id)
                .copied()
                .ok_or_else(|| NetworkError::UnknownNode(id.to_string()))
        };

        let mut segments = Vec::with_capacity(self.segments.len());
        let mut seg_index = HashMap::with_capacity(self.segments.len());
        let mut out_segs = vec![Vec::new(); self.nodes.len()];
        let mut in_segs = vec![Vec::new(); self.nodes.len()];
        for (id, from, to, length, class, v_max) in self.segments {
            let from = lookup(&from)?;
            let to = lookup(&to)?;
            let v_max = v_max.unwrap_or_else(|| class.default_vmax());
            if !(length.is_finite() && length >= MIN_SEGMENT_LENGTH) {
                return Err(NetworkError::BadSegment {
                    segment: id,
                    message: format!("length {length} below minimum {MIN_SEGMENT_LENGTH} m"),
                });
            }
            if !(v_max.is_finite() && v_max > 0.0) {
                return Err(NetworkError::BadSegment {
                    segment: id,
                    message: format!("v_max {v_max} must be positive"),
                });
            }
            if from == to {
                return Err(NetworkError::BadSegment {
                    segment: id,
                    message: "self loop".into(),
                });
            }
            let idx = SegIdx(segments.len() as u32);
            if seg_index.insert(id.clone(), idx).is_some() {
                return Err(NetworkError::DuplicateId {
                    what: "segment",
                    id,
                });
            }
            out_segs[from.ix()].push(idx);
            in_segs[to.ix()].push(idx);
            segments.push(Segment {
                id,
                from,
                to,
                length,
                class,
                v_max,
            });
        }

        // single pass over the segment table gave us the degrees
        for (i, n) in self.nodes.iter().enumerate() {
            let (exp_in, exp_out) = n.kind.degrees();
            let (in_deg, out_deg) = (in_segs[i].len(), out_segs[i].len());
            if in_deg != exp_in || out_deg != exp_out {
                return Err(NetworkError::Degree {
                    node: n.id.clone(),
                    kind: n.kind,
                    in_deg,
                    out_deg,
                    exp_in,
                    exp_out,
                });
            }
        }

        for s in &segments {
            for end in [s.from, s.to] {
                let node = &self.nodes[end.ix()];
                if s.class == SegmentClass::Highway && node.kind.is_terminal() {
                    return Err(NetworkError::HighwayAtTerminal {
                        segment: s.id.clone(),
                        node: node.id.clone(),
                        kind: node.kind,
                    });
                }
            }
        }

        let mut stations = BTreeMap::new();
        let mut capacitors = BTreeMap::new();
        for (id, spec) in self.stations {
            let n = lookup(&id)?;
            if self.nodes[n.ix()].kind != NodeKind::Station {
                return Err(NetworkError::WrongKind {
                    node: id,
                    expected: NodeKind::Station,
                });
            }
            if stations.insert(n, spec).is_some() {
                return Err(NetworkError::DuplicateId { what: "station", id });
            }
        }
        for (id, spec) in self.capacitors {
            let n = lookup(&id)?;
            if self.nodes[n.ix()].kind != NodeKind::Capacitor {
                return Err(NetworkError::WrongKind {
                    node: id,
                    expected: NodeKind::Capacitor,
                });
            }
            if capacitors.insert(n, spec).is_some() {
                return Err(NetworkError::DuplicateId {
                    what: "capacitor",
                    id,
                });
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let idx = NodeIdx(i as u32);
            match n.kind {
                NodeKind::Station => {
                    stations.entry(idx).or_insert(StationSpec {
                        berths: DEFAULT_BERTHS,
                    });
                }
                NodeKind::Capacitor => {
                    capacitors.entry(idx).or_insert(CapacitorSpec {
                        capacity: DEFAULT_CAPACITOR_CAPACITY,
                    });
                }
                _ => {}
            }
        }
        if stations.is_empty() {
            return Err(NetworkError::NoStations);
        }

        let mut order: Vec<usize> = (0..segments.len()).collect();
        order.sort_by(|&a, &b| segments[a].id.cmp(&segments[b].id));
        let mut seg_rank = vec![0u32; segments.len()];
        for (rank, &s) in order.iter().enumerate() {
            seg_rank[s] = rank as u32;
        }

        let net = Network {
            nodes: self.nodes,
            segments,
            node_index,
            seg_index,
            out_segs,
            in_segs,
            stations,
            capacitors,
            seg_rank,
        };
        check_terminal_connectivity(&net)?;
        Ok(net)
    }
}

/// Every terminal must reach every other terminal without passing through a
/// third one, since that is the only kind of path a route may use.
fn check_terminal_connectivity(net: &Network) -> Result<(), NetworkError> {
    let terminals: Vec<NodeIdx> = net
        .stations
        .keys()
        .chain(net.capacitors.keys())
        .copied()
        .collect();
    let mut seen = vec![false; net.nodes.len()];
    let mut queue = VecDeque::new();
    for &src in &terminals {
        seen.iter_mut().for_each(|x| *x = false);
        seen[src.ix()] = true;
        queue.clear();
        queue.push_back(src);
        while let Some(n) = queue.pop_front() {
            if n != src && net.node(n).kind.is_terminal() {
                continue;
            }
            for &s in net.out_segments(n) {
                let to = net.segment(s).to;
                if !seen[to.ix()] {
                    seen[to.ix()] = true;
                    queue.push_back(to);
                }
            }
        }
        if let Some(&miss) = terminals.iter().find(|t| !seen[t.ix()]) {
            return Err(NetworkError::Unreachable {
                from: net.node(src).id.clone(),
                to: net.node(miss).id.clone(),
            });
        }
    }
    Ok(())
}
