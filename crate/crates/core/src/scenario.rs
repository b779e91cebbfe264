//! Bundled ten-node scenario with a hand-written travel-time timeline.
//!
//! The timeline's eight evaluation blocks (two share t = 18) are what the
//! dynamic router is replayed against; the graph files describe the same
//! thirteen 400 m arterial edges for simulation.

use crate::graph::{
    build_graph, parse_categories, parse_edges, parse_nodes, CategoryTable, RoadGraph,
    WeightTimeline,
};

pub const TIMELINE_TOML: &str = include_str!("../scenarios/table4_timeline.toml");
pub const NODES_CSV: &str = include_str!("../scenarios/table4_nodes.csv");
pub const EDGES_CSV: &str = include_str!("../scenarios/table4_edges.csv");
pub const CATEGORIES_TOML: &str = include_str!("../scenarios/categories.toml");

pub const SOURCE: usize = 0;
pub const DESTINATION: usize = 9;

pub fn table4_timeline() -> WeightTimeline {
    WeightTimeline::parse(TIMELINE_TOML).expect("bundled timeline is valid")
}

pub fn categories() -> CategoryTable {
    parse_categories(CATEGORIES_TOML).expect("bundled categories are valid")
}

pub fn table4_graph() -> RoadGraph {
    let nodes = parse_nodes(NODES_CSV.as_bytes()).expect("bundled nodes are valid");
    let edges = parse_edges(EDGES_CSV.as_bytes(), &categories()).expect("bundled edges are valid");
    build_graph(nodes, edges).expect("bundled graph is valid")
}
