//! Time-dependent vehicle routing.
//!
//! A traffic simulator rolls vehicles forward on a road graph and records
//! each edge's travel time per tick as a [`graph::WeightTimeline`]. The
//! routing engine searches that timeline for earliest-arrival routes, and the
//! harness compares them against routes planned on the current snapshot.

pub mod graph;
pub mod harness;
pub mod prediction;
pub mod routing;
pub mod scenario;
pub mod simulation;
