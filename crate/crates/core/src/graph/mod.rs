//! Road network model: node and edge records, CSV ingestion, the static
//! adjacency topology, and the timestamp-keyed travel-time timeline that the
//! routing engine consumes.

mod io;
mod subset;
mod synth;
mod timeline;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{
    load_categories, load_edges, load_nodes, parse_categories, parse_edges, parse_nodes,
    write_edges, write_nodes,
};
pub use subset::subset_graph;
pub use synth::synthetic_network;
pub use timeline::{Topology, WeightMatrix, WeightTimeline};

pub type NodeId = usize;
pub type EdgeId = usize;
pub type VehicleId = usize;

/// Upper bound on the external-inflow standard deviation.
pub const MAX_GAUSSIAN_SIGMA: f64 = 3.0;
/// Standard deviation used when a node row omits it.
pub const DEFAULT_GAUSSIAN_SIGMA: f64 = 1.0;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate node id {0}")]
    DuplicateNodeId(NodeId),
    #[error("duplicate edge id {0}")]
    DuplicateEdgeId(EdgeId),
    #[error("unknown road category {category:?} at line {line}")]
    UnknownCategory { line: u64, category: String },
    #[error("invalid category {name:?}: {reason}")]
    InvalidCategory { name: String, reason: String },
    #[error("edge {edge} references missing node {node}")]
    DanglingEndpoint { edge: EdgeId, node: NodeId },
    #[error("edge {edge} is a self-loop on node {node}")]
    SelfLoop { edge: EdgeId, node: NodeId },
    #[error("edges {first} and {second} both connect nodes {a} and {b}")]
    ParallelEdge {
        first: EdgeId,
        second: EdgeId,
        a: NodeId,
        b: NodeId,
    },
    #[error("{kind} ids must be exactly 0..{count}, found {found}")]
    NonContiguousIds {
        kind: &'static str,
        count: usize,
        found: usize,
    },
    #[error("cannot extract subset: {0}")]
    Unsatisfiable(String),
    #[error("timeline has no recorded timestamps")]
    EmptyTimeline,
    #[error("invalid query time {0}")]
    InvalidTime(f64),
    #[error("invalid timeline: {0}")]
    InvalidTimeline(String),
    #[error("travel time {weight} from {from} to {to} at t={timestamp} is not positive")]
    NonPositiveWeight {
        from: NodeId,
        to: NodeId,
        timestamp: u64,
        weight: f64,
    },
    #[error("failed to parse {what}: {reason}")]
    Parse { what: &'static str, reason: String },
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// Travel direction along an edge. `Forward` runs from `start_node` to `end_node`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Forward, Direction::Backward];

    pub fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Backward => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub latitude: f64,
    pub longitude: f64,
    /// Free-form tag carried from the input file. Not interpreted.
    pub category: String,
    pub node_connections: Vec<NodeId>,
    pub edge_connections: Vec<EdgeId>,
    /// Mean of the external inflow distribution, vehicles per tick.
    pub gaussian_mean: f64,
    /// Standard deviation of the external inflow distribution, in (0, 3].
    pub gaussian_sigma: f64,
    /// Vehicles generated at this node by the most recent inflow draw.
    pub external_vehicle_count: u64,
}

impl NodeRecord {
    pub fn new(id: NodeId, latitude: f64, longitude: f64, category: impl Into<String>) -> Self {
        NodeRecord {
            id,
            latitude,
            longitude,
            category: category.into(),
            node_connections: Vec::new(),
            edge_connections: Vec::new(),
            gaussian_mean: 0.0,
            gaussian_sigma: DEFAULT_GAUSSIAN_SIGMA,
            external_vehicle_count: 0,
        }
    }

    pub fn with_inflow(mut self, mean: f64, sigma: f64) -> Self {
        self.gaussian_mean = mean;
        self.gaussian_sigma = sigma;
        self
    }
}

/// Physical parameters shared by all roads of one category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadCategory {
    /// Road width in meters.
    pub thickness: f64,
    /// Meters per second.
    pub free_flow_speed: f64,
    /// Meters per second.
    pub jam_speed: f64,
}

impl RoadCategory {
    pub fn validate(&self, name: &str) -> Result<()> {
        let bad = |reason: &str| GraphError::InvalidCategory {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        if !(self.thickness.is_finite() && self.thickness > 0.0) {
            return Err(bad("thickness must be positive"));
        }
        if !(self.jam_speed.is_finite() && self.jam_speed > 0.0) {
            return Err(bad("jam_speed must be positive"));
        }
        if !(self.free_flow_speed.is_finite() && self.free_flow_speed > self.jam_speed) {
            return Err(bad("free_flow_speed must exceed jam_speed"));
        }
        Ok(())
    }
}

/// Category name → road parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryTable(pub BTreeMap<String, RoadCategory>);

impl CategoryTable {
    pub fn get(&self, name: &str) -> Option<&RoadCategory> {
        self.0.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, category: RoadCategory) {
        self.0.insert(name.into(), category);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn validate(&self) -> Result<()> {
        self.0.iter().try_for_each(|(name, c)| c.validate(name))
    }

    /// Arterial, collector and local road classes with typical urban widths and speeds.
    pub fn urban_defaults() -> Self {
        let mut table = CategoryTable::default();
        table.insert(
            "arterial",
            RoadCategory {
                thickness: 7.0,
                free_flow_speed: 16.7,
                jam_speed: 2.8,
            },
        );
        table.insert(
            "collector",
            RoadCategory {
                thickness: 5.5,
                free_flow_speed: 13.9,
                jam_speed: 2.2,
            },
        );
        table.insert(
            "local",
            RoadCategory {
                thickness: 3.5,
                free_flow_speed: 11.1,
                jam_speed: 1.7,
            },
        );
        table
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub id: EdgeId,
    pub start_node: NodeId,
    pub end_node: NodeId,
    /// Meters.
    pub distance: f64,
    pub category: String,
    /// Road width in meters.
    pub thickness: f64,
    pub free_flow_speed: f64,
    pub jam_speed: f64,
    pub forward_traffic: f64,
    pub backward_traffic: f64,
    pub vehicle_forward_list: Vec<VehicleId>,
    pub vehicle_backward_list: Vec<VehicleId>,
    /// Seconds.
    pub forward_travel_time: f64,
    pub backward_travel_time: f64,
}

impl EdgeRecord {
    /// An edge with no traffic, travel times at free flow.
    pub fn new(
        id: EdgeId,
        start_node: NodeId,
        end_node: NodeId,
        distance: f64,
        category: impl Into<String>,
        params: RoadCategory,
    ) -> Self {
        let free_flow_time = distance / params.free_flow_speed;
        EdgeRecord {
            id,
            start_node,
            end_node,
            distance,
            category: category.into(),
            thickness: params.thickness,
            free_flow_speed: params.free_flow_speed,
            jam_speed: params.jam_speed,
            forward_traffic: 0.0,
            backward_traffic: 0.0,
            vehicle_forward_list: Vec::new(),
            vehicle_backward_list: Vec::new(),
            forward_travel_time: free_flow_time,
            backward_travel_time: free_flow_time,
        }
    }

    pub fn free_flow_time(&self) -> f64 {
        self.distance / self.free_flow_speed
    }

    pub fn traffic(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Forward => self.forward_traffic,
            Direction::Backward => self.backward_traffic,
        }
    }

    pub fn travel_time(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Forward => self.forward_travel_time,
            Direction::Backward => self.backward_travel_time,
        }
    }

    pub fn vehicles(&self, direction: Direction) -> &[VehicleId] {
        match direction {
            Direction::Forward => &self.vehicle_forward_list,
            Direction::Backward => &self.vehicle_backward_list,
        }
    }

    pub fn vehicles_mut(&mut self, direction: Direction) -> &mut Vec<VehicleId> {
        match direction {
            Direction::Forward => &mut self.vehicle_forward_list,
            Direction::Backward => &mut self.vehicle_backward_list,
        }
    }

    pub fn set_state(&mut self, direction: Direction, traffic: f64, travel_time: f64) {
        match direction {
            Direction::Forward => {
                self.forward_traffic = traffic;
                self.forward_travel_time = travel_time;
            }
            Direction::Backward => {
                self.backward_traffic = traffic;
                self.backward_travel_time = travel_time;
            }
        }
    }

    /// Direction of travel when leaving `node` along this edge.
    pub fn direction_from(&self, node: NodeId) -> Option<Direction> {
        if node == self.start_node {
            Some(Direction::Forward)
        } else if node == self.end_node {
            Some(Direction::Backward)
        } else {
            None
        }
    }

    /// Node reached at the end of a traversal in `direction`.
    pub fn head(&self, direction: Direction) -> NodeId {
        match direction {
            Direction::Forward => self.end_node,
            Direction::Backward => self.start_node,
        }
    }

    pub fn tail(&self, direction: Direction) -> NodeId {
        match direction {
            Direction::Forward => self.start_node,
            Direction::Backward => self.end_node,
        }
    }

    pub fn params(&self) -> RoadCategory {
        RoadCategory {
            thickness: self.thickness,
            free_flow_speed: self.free_flow_speed,
            jam_speed: self.jam_speed,
        }
    }
}

/// Undirected road graph whose edges carry independent per-direction state.
///
/// Node and edge ids are dense: `nodes[i].id == i` and `edges[j].id == j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadGraph {
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
}

/// Validates ids and endpoints, then fills in each node's connection lists.
///
/// Both node and edge ids must form the contiguous range starting at zero,
/// in any order. Connection lists are sorted by neighbouring node id.
pub fn build_graph(mut nodes: Vec<NodeRecord>, mut edges: Vec<EdgeRecord>) -> Result<RoadGraph> {
    nodes.sort_by_key(|n| n.id);
    edges.sort_by_key(|e| e.id);
    for pair in nodes.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(GraphError::DuplicateNodeId(pair[0].id));
        }
    }
    for pair in edges.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(GraphError::DuplicateEdgeId(pair[0].id));
        }
    }
    if let Some(n) = nodes
        .iter()
        .enumerate()
        .find(|(i, n)| n.id != *i)
        .map(|(_, n)| n)
    {
        return Err(GraphError::NonContiguousIds {
            kind: "node",
            count: nodes.len(),
            found: n.id,
        });
    }
    if let Some(e) = edges
        .iter()
        .enumerate()
        .find(|(i, e)| e.id != *i)
        .map(|(_, e)| e)
    {
        return Err(GraphError::NonContiguousIds {
            kind: "edge",
            count: edges.len(),
            found: e.id,
        });
    }

    let mut seen: BTreeMap<(NodeId, NodeId), EdgeId> = BTreeMap::new();
    for edge in &edges {
        for node in [edge.start_node, edge.end_node] {
            if node >= nodes.len() {
                return Err(GraphError::DanglingEndpoint {
                    edge: edge.id,
                    node,
                });
            }
        }
        if edge.start_node == edge.end_node {
            return Err(GraphError::SelfLoop {
                edge: edge.id,
                node: edge.start_node,
            });
        }
        let key = (
            edge.start_node.min(edge.end_node),
            edge.start_node.max(edge.end_node),
        );
        if let Some(&first) = seen.get(&key) {
            return Err(GraphError::ParallelEdge {
                first,
                second: edge.id,
                a: key.0,
                b: key.1,
            });
        }
        seen.insert(key, edge.id);
    }

    let mut incident: Vec<Vec<(NodeId, EdgeId)>> = vec![Vec::new(); nodes.len()];
    for edge in &edges {
        incident[edge.start_node].push((edge.end_node, edge.id));
        incident[edge.end_node].push((edge.start_node, edge.id));
    }
    for (node, mut links) in nodes.iter_mut().zip(incident) {
        links.sort_unstable();
        node.node_connections = links.iter().map(|&(n, _)| n).collect();
        node.edge_connections = links.iter().map(|&(_, e)| e).collect();
    }
    Ok(RoadGraph { nodes, edges })
}

impl RoadGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeRecord> {
        self.nodes.get(id)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&EdgeRecord> {
        self.edges.get(id)
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> &mut NodeRecord {
        &mut self.nodes[id]
    }

    pub(crate) fn edge_mut(&mut self, id: EdgeId) -> &mut EdgeRecord {
        &mut self.edges[id]
    }

    pub(crate) fn edges_mut(&mut self) -> &mut [EdgeRecord] {
        &mut self.edges
    }

    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].node_connections
    }

    /// The edge joining `a` and `b`, in either orientation.
    pub fn edge_between(&self, a: NodeId, b: NodeId) -> Option<&EdgeRecord> {
        let node = self.nodes.get(a)?;
        let pos = node.node_connections.binary_search(&b).ok()?;
        Some(&self.edges[node.edge_connections[pos]])
    }

    /// Directed adjacency with one arc per edge direction.
    pub fn topology(&self) -> Topology {
        Topology::from_adjacency(
            self.nodes
                .iter()
                .map(|n| n.node_connections.clone())
                .collect(),
        )
        .expect("graph adjacency is sorted and in range")
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.nodes.len()
    }

    /// One-snapshot timeline holding the current per-direction travel times.
    pub fn current_weights(&self, topology: &Topology) -> Vec<f64> {
        let mut weights = Vec::with_capacity(topology.arc_count());
        for u in 0..topology.node_count() {
            for &v in topology.targets(u) {
                let edge = self.edge_between(u, v).expect("topology matches graph");
                let dir = edge.direction_from(u).expect("u is an endpoint");
                weights.push(edge.travel_time(dir));
            }
        }
        weights
    }
}
