//! Minimum-travel-time routing over a [`WeightTimeline`].
//!
//! [`dynamic_dijkstra`] is label-correcting: it keeps no visited set, looks
//! up every edge weight at the moment its tail node is left, and never expands
//! the destination. [`static_dijkstra`] is the textbook baseline on one fixed
//! matrix. Both break ties between equal tentative times toward the lower node
//! id and only accept strict improvements.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{GraphError, NodeId, WeightMatrix, WeightTimeline};

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("unreachable: no route from {from} to {to}")]
    Unreachable { from: NodeId, to: NodeId },
    #[error("edge {from} -> {to} has non-positive weight {weight}")]
    NonPositiveWeight {
        from: NodeId,
        to: NodeId,
        weight: f64,
    },
    #[error("path uses missing edge {from} -> {to}")]
    MissingEdge { from: NodeId, to: NodeId },
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("source and destination are both {0}")]
    SameEndpoints(NodeId),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One traversed edge of a route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hop {
    pub from: NodeId,
    pub to: NodeId,
    pub depart: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteResult {
    pub path: Vec<NodeId>,
    /// Label of each path node: when it is left, or reached for the last one.
    pub departure_times: Vec<f64>,
    pub total_time: f64,
    /// Final label of every node; infinite where never reached.
    pub time_labels: Vec<f64>,
    pub parent: Vec<Option<NodeId>>,
}

impl RouteResult {
    pub fn source(&self) -> NodeId {
        self.path[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.path.last().expect("non-empty path")
    }

    pub fn hops(&self) -> Vec<Hop> {
        self.path
            .windows(2)
            .zip(self.departure_times.windows(2))
            .map(|(p, t)| Hop {
                from: p[0],
                to: p[1],
                depart: t[0],
                weight: t[1] - t[0],
            })
            .collect()
    }

    /// JSON document with the path, hops and total time.
    pub fn to_json(&self) -> serde_json::Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            path: &'a [NodeId],
            hops: Vec<Hop>,
            total_time: f64,
        }
        serde_json::to_string_pretty(&Doc {
            path: &self.path,
            hops: self.hops(),
            total_time: self.total_time,
        })
    }

    /// CSV rows `from,to,depart,weight`, one per hop.
    pub fn write_hops_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        w.write_record(["from", "to", "depart", "weight"])?;
        for hop in self.hops() {
            w.serialize(hop)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Heap entry ordered by (time, node), smallest first via `Reverse`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    time: f64,
    node: NodeId,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn check_endpoints(n: usize, source: NodeId, destination: NodeId) -> Result<(), RoutingError> {
    for node in [source, destination] {
        if node >= n {
            return Err(RoutingError::UnknownNode(node));
        }
    }
    if source == destination {
        return Err(RoutingError::SameEndpoints(source));
    }
    Ok(())
}

fn finish(
    time: Vec<f64>,
    parent: Vec<Option<NodeId>>,
    source: NodeId,
    destination: NodeId,
) -> Result<RouteResult, RoutingError> {
    if time[destination].is_infinite() {
        return Err(RoutingError::Unreachable {
            from: source,
            to: destination,
        });
    }
    // Parent links always point to a strictly smaller label, so this ends.
    let mut path = vec![destination];
    let mut node = destination;
    while let Some(p) = parent[node] {
        path.push(p);
        node = p;
    }
    debug_assert_eq!(node, source);
    path.reverse();
    Ok(RouteResult {
        departure_times: path.iter().map(|&n| time[n]).collect(),
        total_time: time[destination],
        path,
        time_labels: time,
        parent,
    })
}

/// Earliest-arrival route from `source` to `destination`, leaving `source`
/// at time 0, with every edge priced at the moment its tail is left.
pub fn dynamic_dijkstra(
    timeline: &WeightTimeline,
    source: NodeId,
    destination: NodeId,
) -> Result<RouteResult, RoutingError> {
    let n = timeline.node_count();
    check_endpoints(n, source, destination)?;
    let mut time = vec![f64::INFINITY; n];
    let mut parent = vec![None; n];
    time[source] = 0.0;
    let mut queue = BinaryHeap::from([Reverse(Entry {
        time: 0.0,
        node: source,
    })]);

    while let Some(Reverse(Entry { time: t, node: u })) = queue.pop() {
        if t > time[u] {
            continue;
        }
        let weights = timeline.weights_at(time[u])?;
        for (v, w) in weights.outgoing(u) {
            if w <= 0.0 || !w.is_finite() {
                return Err(RoutingError::NonPositiveWeight {
                    from: u,
                    to: v,
                    weight: w,
                });
            }
            let alt = time[u] + w;
            if alt < time[v] {
                time[v] = alt;
                parent[v] = Some(u);
                if v != destination {
                    queue.push(Reverse(Entry { time: alt, node: v }));
                }
            }
        }
    }
    finish(time, parent, source, destination)
}

/// Conventional Dijkstra on one fixed matrix.
pub fn static_dijkstra(
    weights: WeightMatrix<'_>,
    source: NodeId,
    destination: NodeId,
) -> Result<RouteResult, RoutingError> {
    let n = weights.node_count();
    check_endpoints(n, source, destination)?;
    let mut time = vec![f64::INFINITY; n];
    let mut parent = vec![None; n];
    let mut visited = vec![false; n];
    time[source] = 0.0;
    let mut queue = BinaryHeap::from([Reverse(Entry {
        time: 0.0,
        node: source,
    })]);

    while let Some(Reverse(Entry { node: u, .. })) = queue.pop() {
        if visited[u] {
            continue;
        }
        visited[u] = true;
        for (v, w) in weights.outgoing(u) {
            if w <= 0.0 || !w.is_finite() {
                return Err(RoutingError::NonPositiveWeight {
                    from: u,
                    to: v,
                    weight: w,
                });
            }
            let alt = time[u] + w;
            if !visited[v] && alt < time[v] {
                time[v] = alt;
                parent[v] = Some(u);
                queue.push(Reverse(Entry { time: alt, node: v }));
            }
        }
    }
    finish(time, parent, source, destination)
}

/// Time needed to drive `path` when leaving its first node at `depart`,
/// pricing each hop at the moment it starts.
pub fn experienced_time(
    timeline: &WeightTimeline,
    path: &[NodeId],
    depart: f64,
) -> Result<f64, RoutingError> {
    let mut t = depart;
    for hop in path.windows(2) {
        let (from, to) = (hop[0], hop[1]);
        t += timeline
            .weight(from, to, t)?
            .ok_or(RoutingError::MissingEdge { from, to })?;
    }
    Ok(t - depart)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::graph::Topology;

    fn table4() -> WeightTimeline {
        WeightTimeline::parse(include_str!("../scenarios/table4_timeline.toml")).unwrap()
    }

    fn line(weights: &[f64]) -> WeightTimeline {
        let n = weights.len() + 1;
        let adjacency = (0..n)
            .map(|i| {
                let mut v = Vec::new();
                if i > 0 {
                    v.push(i - 1);
                }
                if i + 1 < n {
                    v.push(i + 1);
                }
                v
            })
            .collect();
        let topology = Arc::new(Topology::from_adjacency(adjacency).unwrap());
        let mut arc_weights = vec![0.0; topology.arc_count()];
        for (i, &w) in weights.iter().enumerate() {
            arc_weights[topology.arc_index(i, i + 1).unwrap()] = w;
            arc_weights[topology.arc_index(i + 1, i).unwrap()] = w;
        }
        WeightTimeline::constant(topology, arc_weights).unwrap()
    }

    #[test]
    fn table4_dynamic_route() {
        let r = dynamic_dijkstra(&table4(), 0, 9).unwrap();
        assert_eq!(r.path, vec![0, 1, 3, 7, 9]);
        assert_eq!(r.total_time, 36.0);
        let weights: Vec<f64> = r.hops().iter().map(|h| h.weight).collect();
        assert_eq!(weights, vec![8.0, 12.0, 12.0, 4.0]);
        assert_eq!(r.departure_times, vec![0.0, 8.0, 20.0, 32.0, 36.0]);
        assert_eq!(r.time_labels[9], r.total_time);
    }

    #[test]
    fn table4_static_route() {
        let tl = table4();
        let r = static_dijkstra(tl.snapshot(0), 0, 9).unwrap();
        assert_eq!(r.total_time, 43.0);
        assert_eq!(r.path, vec![0, 2, 4, 6, 9]);
    }

    #[test]
    fn table4_experienced_time() {
        let tl = table4();
        assert_eq!(experienced_time(&tl, &[0, 1, 3, 7, 9], 0.0).unwrap(), 36.0);
        assert_eq!(experienced_time(&tl, &[4], 0.0).unwrap(), 0.0);
        assert!(matches!(
            experienced_time(&tl, &[0, 9], 0.0),
            Err(RoutingError::MissingEdge { from: 0, to: 9 })
        ));
    }

    #[test]
    fn single_neighbour() {
        let tl = line(&[5.0]);
        let r = dynamic_dijkstra(&tl, 0, 1).unwrap();
        assert_eq!((r.path.clone(), r.total_time), (vec![0, 1], 5.0));
        assert_eq!(
            static_dijkstra(tl.snapshot(0), 0, 1).unwrap().total_time,
            5.0
        );
    }

    #[test]
    fn endpoint_errors() {
        let tl = line(&[1.0, 2.0]);
        assert!(matches!(
            dynamic_dijkstra(&tl, 1, 1),
            Err(RoutingError::SameEndpoints(1))
        ));
        assert!(matches!(
            dynamic_dijkstra(&tl, 0, 7),
            Err(RoutingError::UnknownNode(7))
        ));
    }

    #[test]
    fn disconnected_destination() {
        let topology = Arc::new(Topology::from_adjacency(vec![vec![1], vec![0], vec![]]).unwrap());
        let tl = WeightTimeline::constant(topology, vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            dynamic_dijkstra(&tl, 0, 2),
            Err(RoutingError::Unreachable { .. })
        ));
        assert!(matches!(
            static_dijkstra(tl.snapshot(0), 0, 2),
            Err(RoutingError::Unreachable { .. })
        ));
    }

    #[test]
    fn static_rejects_non_positive_weights() {
        let topology = Topology::from_adjacency(vec![vec![1], vec![0]]).unwrap();
        let w = [0.0, 1.0];
        assert!(matches!(
            static_dijkstra(WeightMatrix::new(&topology, &w), 0, 1),
            Err(RoutingError::NonPositiveWeight { .. })
        ));
    }

    #[test]
    fn ties_pop_lower_id_first() {
        // Two equal routes 0-1-3 and 0-2-3: node 1 pops before node 2 and
        // claims node 3; node 2's equal offer is not an improvement.
        let topology = Arc::new(
            Topology::from_adjacency(vec![vec![1, 2], vec![0, 3], vec![0, 3], vec![1, 2]]).unwrap(),
        );
        let tl = WeightTimeline::constant(topology, vec![1.0; 8]).unwrap();
        assert_eq!(dynamic_dijkstra(&tl, 0, 3).unwrap().path, vec![0, 1, 3]);
        assert_eq!(
            static_dijkstra(tl.snapshot(0), 0, 3).unwrap().path,
            vec![0, 1, 3]
        );
    }

    #[test]
    fn route_outputs() {
        let r = dynamic_dijkstra(&table4(), 0, 9).unwrap();
        let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(json["total_time"], 36.0);
        assert_eq!(json["hops"].as_array().unwrap().len(), 4);
        let mut buf = Vec::new();
        r.write_hops_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "from,to,depart,weight");
        assert_eq!(text.lines().nth(3).unwrap(), "3,7,20.0,12.0");
    }
}
