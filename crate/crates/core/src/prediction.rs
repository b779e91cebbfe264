//! Traffic prediction: density from the vehicles on each edge, speed from the
//! density thresholds, travel time from distance and mean speed, and the
//! forward roll-out that turns a simulated world into a [`WeightTimeline`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Direction, EdgeId, EdgeRecord, GraphError, VehicleId, WeightTimeline};
use crate::simulation::{SimError, VehicleRecord, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("thresholds must satisfy 0 < alpha < beta, got alpha={alpha}, beta={beta}")]
pub struct InvalidThresholds {
    pub alpha: f64,
    pub beta: f64,
}

/// Density thresholds separating free-flow, normal and jammed edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    alpha: f64,
    beta: f64,
}

impl Thresholds {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, InvalidThresholds> {
        if alpha > 0.0 && beta.is_finite() && alpha < beta {
            Ok(Thresholds { alpha, beta })
        } else {
            Err(InvalidThresholds { alpha, beta })
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// How densities between `alpha` and `beta` map to speed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedModel {
    /// Linear below `alpha`, jam speed above `beta`, and the free-flow
    /// initial value in between.
    #[default]
    Faithful,
    /// Linear all the way up to `beta`, so speed never increases with density.
    Monotone,
}

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error(transparent)]
    InvalidThresholds(#[from] InvalidThresholds),
    #[error("vehicle {vehicle} is listed on edge {edge} ({direction}) but is elsewhere")]
    InconsistentMembership {
        vehicle: VehicleId,
        edge: EdgeId,
        direction: Direction,
    },
    #[error("mean speed on edge {edge} is not positive")]
    ZeroSpeed { edge: EdgeId },
    #[error("horizon {horizon} is not a multiple of the {tick}s tick")]
    InvalidHorizon { horizon: u64, tick: u64 },
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Width-normalised density of one edge direction:
/// `(Σ vehicle thickness / edge length) × edge thickness`.
pub fn edge_density<'a, I>(
    edge: &EdgeRecord,
    direction: Direction,
    vehicles: I,
) -> Result<f64, PredictionError>
where
    I: IntoIterator<Item = &'a VehicleRecord>,
{
    let mut occupied = 0.0;
    for v in vehicles {
        if v.edge_id != Some(edge.id) || v.direction != direction {
            return Err(PredictionError::InconsistentMembership {
                vehicle: v.id,
                edge: edge.id,
                direction,
            });
        }
        occupied += v.thickness;
    }
    Ok(occupied / edge.distance * edge.thickness)
}

/// Vehicles per meter, before any width normalisation.
pub fn raw_density(edge: &EdgeRecord, vehicle_count: usize) -> f64 {
    vehicle_count as f64 / edge.distance
}

/// Speed of a vehicle on an edge with the given normalised density, clamped
/// to `[jam_speed, free_flow_speed]`.
pub fn vehicle_speed(
    density: f64,
    edge: &EdgeRecord,
    thresholds: &Thresholds,
    model: SpeedModel,
) -> f64 {
    let linear = (edge.free_flow_speed - edge.jam_speed) * (1.0 - density) + edge.jam_speed;
    let speed = if density > thresholds.beta {
        edge.jam_speed
    } else if density <= thresholds.alpha {
        linear
    } else {
        match model {
            SpeedModel::Faithful => edge.free_flow_speed,
            SpeedModel::Monotone => linear,
        }
    };
    speed.clamp(edge.jam_speed, edge.free_flow_speed)
}

/// Arithmetic mean of the vehicle speeds; an empty edge is in free flow.
pub fn edge_average_speed(edge: &EdgeRecord, speeds: &[f64]) -> f64 {
    if speeds.is_empty() {
        edge.free_flow_speed
    } else {
        speeds.iter().sum::<f64>() / speeds.len() as f64
    }
}

pub fn edge_travel_time(edge: &EdgeRecord, mean_speed: f64) -> Result<f64, PredictionError> {
    if mean_speed > 0.0 && mean_speed.is_finite() {
        Ok(edge.distance / mean_speed)
    } else {
        Err(PredictionError::ZeroSpeed { edge: edge.id })
    }
}

/// Macroscopic state of one edge direction at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeFlowAggregate {
    pub edge_id: EdgeId,
    pub direction: Direction,
    /// Width-normalised density.
    pub density: f64,
    /// Vehicles per meter.
    pub raw_density: f64,
    /// Space-mean speed, m/s.
    pub mean_speed: f64,
    /// Vehicles per second, `raw_density × mean_speed`.
    pub flow: f64,
    pub travel_time: f64,
}

impl EdgeFlowAggregate {
    pub fn new(
        edge: &EdgeRecord,
        direction: Direction,
        density: f64,
        vehicle_count: usize,
        mean_speed: f64,
    ) -> Result<Self, PredictionError> {
        let raw = raw_density(edge, vehicle_count);
        Ok(EdgeFlowAggregate {
            edge_id: edge.id,
            direction,
            density,
            raw_density: raw,
            mean_speed,
            flow: raw * mean_speed,
            travel_time: edge_travel_time(edge, mean_speed)?,
        })
    }
}

/// Per-tick aggregates of a prediction run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TickAggregates {
    pub clock: u64,
    pub flows: Vec<EdgeFlowAggregate>,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub timeline: WeightTimeline,
    pub aggregates: Vec<TickAggregates>,
}

/// Rolls a clone of `world` forward for `horizon` seconds and records every
/// edge's per-direction travel time after each tick. Timestamps are relative
/// to the world's current clock, so the first snapshot is always at 0.
pub fn predict_timeline(
    world: &WorldState,
    horizon: u64,
) -> Result<WeightTimeline, PredictionError> {
    predict(world, horizon).map(|p| p.timeline)
}

pub fn predict(world: &WorldState, horizon: u64) -> Result<Prediction, PredictionError> {
    let tick = world.config().tick;
    if !horizon.is_multiple_of(tick) {
        return Err(PredictionError::InvalidHorizon { horizon, tick });
    }
    let mut world = world.clone();
    let start = world.clock();
    let topology = Arc::new(world.graph().topology());
    let mut timeline = WeightTimeline::new(Arc::clone(&topology));
    let mut aggregates = Vec::with_capacity((horizon / tick) as usize + 1);

    let mut record = |world: &WorldState| -> Result<(), PredictionError> {
        let t = world.clock() - start;
        timeline.push(t, world.graph().current_weights(&topology))?;
        aggregates.push(TickAggregates {
            clock: t,
            flows: world.flows().to_vec(),
        });
        Ok(())
    };
    record(&world)?;
    for _ in 0..horizon / tick {
        world.step()?;
        record(&world)?;
    }
    Ok(Prediction {
        timeline,
        aggregates,
    })
}
