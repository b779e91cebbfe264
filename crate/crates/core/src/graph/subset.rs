use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{build_graph, EdgeId, GraphError, NodeId, Result, RoadGraph};

/// Extracts a connected subgraph with `node_count` nodes and at most
/// `edge_count` edges.
///
/// Nodes are collected by breadth-first expansion from a seeded random root,
/// visiting neighbours in seeded random order. If the induced subgraph has too
/// many edges, the expansion tree is kept and the remaining budget is filled
/// from the other induced edges in seeded random order. Nodes and edges are
/// renumbered densely, preserving the original id order.
pub fn subset_graph(
    graph: &RoadGraph,
    node_count: usize,
    edge_count: usize,
    seed: u64,
) -> Result<RoadGraph> {
    if node_count > graph.node_count() {
        return Err(GraphError::Unsatisfiable(format!(
            "requested {node_count} nodes from a graph with {}",
            graph.node_count()
        )));
    }
    if edge_count > graph.edge_count() {
        return Err(GraphError::Unsatisfiable(format!(
            "requested {edge_count} edges from a graph with {}",
            graph.edge_count()
        )));
    }
    if node_count == 0 {
        return build_graph(Vec::new(), Vec::new());
    }
    if edge_count + 1 < node_count {
        return Err(GraphError::Unsatisfiable(format!(
            "{node_count} connected nodes need at least {} edges",
            node_count - 1
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut roots: Vec<NodeId> = (0..graph.node_count()).collect();
    roots.shuffle(&mut rng);

    let mut explored = vec![false; graph.node_count()];
    let (members, tree) = roots
        .into_iter()
        .find_map(|root| {
            if explored[root] {
                return None;
            }
            let grown = grow(graph, root, node_count, &mut rng, &mut explored);
            (grown.0.len() == node_count).then_some(grown)
        })
        .ok_or_else(|| {
            GraphError::Unsatisfiable(format!("no connected component has {node_count} nodes"))
        })?;

    let mut inside = vec![false; graph.node_count()];
    for &n in &members {
        inside[n] = true;
    }
    let induced: Vec<EdgeId> = graph
        .edges()
        .iter()
        .filter(|e| inside[e.start_node] && inside[e.end_node])
        .map(|e| e.id)
        .collect();

    let mut kept = if induced.len() <= edge_count {
        induced
    } else {
        let mut in_tree = vec![false; graph.edge_count()];
        for &e in &tree {
            in_tree[e] = true;
        }
        let mut extra: Vec<EdgeId> = induced.into_iter().filter(|&e| !in_tree[e]).collect();
        extra.shuffle(&mut rng);
        extra.truncate(edge_count - tree.len());
        let mut kept = tree;
        kept.extend(extra);
        kept
    };
    kept.sort_unstable();

    let mut sorted_members = members;
    sorted_members.sort_unstable();
    let renumber: BTreeMap<NodeId, NodeId> = sorted_members
        .iter()
        .enumerate()
        .map(|(new, &old)| (old, new))
        .collect();

    let nodes = sorted_members
        .iter()
        .enumerate()
        .map(|(new, &old)| {
            let mut node = graph.nodes()[old].clone();
            node.id = new;
            node
        })
        .collect();
    let edges = kept
        .iter()
        .enumerate()
        .map(|(new, &old)| {
            let mut edge = graph.edges()[old].clone();
            edge.id = new;
            edge.start_node = renumber[&edge.start_node];
            edge.end_node = renumber[&edge.end_node];
            edge.vehicle_forward_list.clear();
            edge.vehicle_backward_list.clear();
            edge
        })
        .collect();
    build_graph(nodes, edges)
}

/// Breadth-first growth from `root`, stopping at `limit` nodes. Returns the
/// collected nodes and the tree edges that discovered them.
fn grow(
    graph: &RoadGraph,
    root: NodeId,
    limit: usize,
    rng: &mut ChaCha8Rng,
    explored: &mut [bool],
) -> (Vec<NodeId>, Vec<EdgeId>) {
    let mut seen = vec![false; graph.node_count()];
    let mut members = vec![root];
    let mut tree = Vec::new();
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    explored[root] = true;
    while let Some(u) = queue.pop_front() {
        let node = &graph.nodes()[u];
        let mut links: Vec<(NodeId, EdgeId)> = node
            .node_connections
            .iter()
            .copied()
            .zip(node.edge_connections.iter().copied())
            .collect();
        links.shuffle(rng);
        for (v, e) in links {
            if members.len() == limit {
                return (members, tree);
            }
            if !seen[v] {
                seen[v] = true;
                explored[v] = true;
                members.push(v);
                tree.push(e);
                queue.push_back(v);
            }
        }
    }
    (members, tree)
}
