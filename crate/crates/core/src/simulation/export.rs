use std::io::{self, Write};

use serde::Serialize;

use super::Event;
use crate::graph::{Direction, EdgeId, RoadGraph};

pub const SNAPSHOT_HEADER: [&str; 6] = [
    "tick",
    "edge_id",
    "fwd_density",
    "bwd_density",
    "fwd_tt",
    "bwd_tt",
];

/// Per-edge traffic state at one clock value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnapshotRow {
    pub tick: u64,
    pub edge_id: EdgeId,
    pub fwd_density: f64,
    pub bwd_density: f64,
    pub fwd_tt: f64,
    pub bwd_tt: f64,
}

pub fn snapshot_rows(graph: &RoadGraph, clock: u64) -> Vec<SnapshotRow> {
    graph
        .edges()
        .iter()
        .map(|e| SnapshotRow {
            tick: clock,
            edge_id: e.id,
            fwd_density: e.traffic(Direction::Forward),
            bwd_density: e.traffic(Direction::Backward),
            fwd_tt: e.travel_time(Direction::Forward),
            bwd_tt: e.travel_time(Direction::Backward),
        })
        .collect()
}

pub fn write_snapshot_rows<W: Write>(out: W, rows: &[SnapshotRow]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(SNAPSHOT_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `tick,event_kind,vehicle_id,node_or_edge_id` rows.
pub fn write_events<W: Write>(out: W, events: &[Event]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tick", "event_kind", "vehicle_id", "node_or_edge_id"])?;
    for e in events {
        w.write_record([
            e.clock.to_string(),
            e.kind.as_str().to_string(),
            e.vehicle.to_string(),
            e.target.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Graphviz rendering with per-direction travel times as edge labels.
pub fn write_dot<W: Write>(mut out: W, graph: &RoadGraph) -> io::Result<()> {
    writeln!(out, "graph road {{")?;
    for n in graph.nodes() {
        writeln!(out, "  {} [label=\"{}\"];", n.id, n.id)?;
    }
    for e in graph.edges() {
        writeln!(
            out,
            "  {} -- {} [label=\"e{} tt_fwd={:.2} tt_bwd={:.2}\"];",
            e.start_node,
            e.end_node,
            e.id,
            e.travel_time(Direction::Forward),
            e.travel_time(Direction::Backward)
        )?;
    }
    writeln!(out, "}}")
}
