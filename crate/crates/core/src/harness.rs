//! Static-versus-dynamic comparison experiments.
//!
//! A comparison routes one pair twice over the same predicted timeline: once
//! with the dynamic router, and once with the static router on the first
//! snapshot, whose path is then driven through the timeline. The gap between
//! the two times is the benefit of looking ahead.

use std::io::Write;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    subset_graph, synthetic_network, CategoryTable, GraphError, NodeId, RoadGraph, Topology,
    WeightTimeline,
};
use crate::prediction::{predict, Prediction, PredictionError, TickAggregates};
use crate::routing::{dynamic_dijkstra, experienced_time, static_dijkstra, RoutingError};
use crate::simulation::{seed_vehicles, SimConfig, SimError, WorldState};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no comparison records to average")]
    EmptyInput,
    #[error("every sweep cell was rejected")]
    NoValidCells,
    #[error("requested {requested} pairs but only {available} routable pairs exist")]
    NotEnoughPairs { requested: usize, available: usize },
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Prediction(#[from] PredictionError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Result of routing one pair both ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    #[serde(rename = "src")]
    pub source: NodeId,
    #[serde(rename = "dst")]
    pub destination: NodeId,
    /// Static path driven through the timeline.
    #[serde(rename = "T")]
    pub static_time: f64,
    /// Dynamic route time.
    pub tau: f64,
    pub delta: f64,
    /// Static path cost under the first snapshot alone. JSON only.
    pub static_cost: f64,
}

/// Mean of `static_time - tau` over all records.
pub fn average_difference(records: &[ComparisonRecord]) -> Result<f64, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    Ok(records.iter().map(|r| r.delta).sum::<f64>() / records.len() as f64)
}

pub fn compare_pair(
    timeline: &WeightTimeline,
    source: NodeId,
    destination: NodeId,
) -> Result<ComparisonRecord, RoutingError> {
    let fixed = static_dijkstra(timeline.snapshot(0), source, destination)?;
    let static_time = experienced_time(timeline, &fixed.path, 0.0)?;
    let tau = dynamic_dijkstra(timeline, source, destination)?.total_time;
    Ok(ComparisonRecord {
        source,
        destination,
        static_time,
        tau,
        delta: static_time - tau,
        static_cost: fixed.total_time,
    })
}

/// Compares every pair in parallel. Unreachable pairs are logged and
/// skipped; output order follows `pairs`.
pub fn compare_pairs(
    timeline: &WeightTimeline,
    pairs: &[(NodeId, NodeId)],
) -> Result<Vec<ComparisonRecord>, HarnessError> {
    let results: Vec<_> = pairs
        .par_iter()
        .map(|&(s, d)| compare_pair(timeline, s, d))
        .collect();
    let mut records = Vec::with_capacity(results.len());
    for result in results {
        match result {
            Ok(record) => records.push(record),
            Err(RoutingError::Unreachable { from, to }) => {
                warn!("skipping unreachable pair {from} -> {to}")
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(records)
}

/// Draws `count` distinct ordered pairs uniformly from those with a route.
pub fn sample_pairs(
    topology: &Topology,
    count: usize,
    seed: u64,
) -> Result<Vec<(NodeId, NodeId)>, HarnessError> {
    let mut routable = Vec::new();
    for s in 0..topology.node_count() {
        let reach = topology.reachable_from(s);
        routable.extend(
            (0..topology.node_count())
                .filter(|&d| d != s && reach[d])
                .map(|d| (s, d)),
        );
    }
    if count > routable.len() {
        return Err(HarnessError::NotEnoughPairs {
            requested: count,
            available: routable.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (chosen, _) = routable.partial_shuffle(&mut rng, count);
    Ok(chosen.to_vec())
}

/// One α–β grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    pub lambda: f64,
    #[serde(skip)]
    pub seed: u64,
}

/// Everything needed to rebuild an experiment from a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Synthetic source network size.
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Connected subset actually simulated.
    pub nodes: usize,
    pub edges: usize,
    pub vehicles: usize,
    /// Seconds of predicted traffic.
    pub horizon: u64,
    pub pairs: usize,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub categories: CategoryTable,
    pub simulation: SimConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            grid_rows: 16,
            grid_cols: 16,
            nodes: 80,
            edges: 150,
            vehicles: 200,
            horizon: 900,
            pairs: 1000,
            alphas: vec![0.1, 0.2, 0.3],
            betas: vec![0.5, 0.7, 0.9],
            categories: CategoryTable::urban_defaults(),
            simulation: SimConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.categories.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    fn graph_seed(&self) -> u64 {
        self.seed
    }

    fn vehicle_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    fn pair_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }

    /// The seeded connected road network used by every experiment.
    pub fn build_graph(&self) -> Result<RoadGraph, HarnessError> {
        let full = synthetic_network(
            self.grid_rows,
            self.grid_cols,
            self.graph_seed(),
            &self.categories,
        );
        Ok(subset_graph(
            &full,
            self.nodes,
            self.edges,
            self.graph_seed(),
        )?)
    }

    /// Seeded initial world, with `simulation` overriding the configured one.
    pub fn initial_world(
        &self,
        graph: RoadGraph,
        simulation: SimConfig,
    ) -> Result<WorldState, HarnessError> {
        Ok(seed_vehicles(
            graph,
            self.vehicles,
            simulation,
            self.vehicle_seed(),
        )?)
    }

    pub fn predict(&self) -> Result<Prediction, HarnessError> {
        let world = self.initial_world(self.build_graph()?, self.simulation.clone())?;
        Ok(predict(&world, self.horizon)?)
    }

    pub fn sample_pairs(&self, topology: &Topology) -> Result<Vec<(NodeId, NodeId)>, HarnessError> {
        sample_pairs(topology, self.pairs, self.pair_seed())
    }
}

/// Full comparison run for one configuration.
pub fn run_comparison(
    config: &ExperimentConfig,
) -> Result<(Vec<ComparisonRecord>, f64), HarnessError> {
    let timeline = config.predict()?.timeline;
    let pairs = config.sample_pairs(timeline.topology())?;
    let records = compare_pairs(&timeline, &pairs)?;
    let lambda = average_difference(&records)?;
    Ok((records, lambda))
}

/// Reruns the prediction for every (α, β) on the grid from the same initial
/// world and pair set, and records the mean difference per cell. Cells with
/// invalid thresholds are logged and skipped.
pub fn alpha_beta_sweep(config: &ExperimentConfig) -> Result<Vec<SweepCell>, HarnessError> {
    let graph = config.build_graph()?;
    let pairs = config.sample_pairs(&graph.topology())?;
    let grid: Vec<(f64, f64)> = config
        .alphas
        .iter()
        .flat_map(|&a| config.betas.iter().map(move |&b| (a, b)))
        .collect();

    let cells: Vec<Option<Result<SweepCell, HarnessError>>> = grid
        .par_iter()
        .map(|&(alpha, beta)| {
            let simulation = SimConfig {
                alpha,
                beta,
                ..config.simulation.clone()
            };
            if let Err(e) = simulation.thresholds() {
                warn!("skipping sweep cell: {e}");
                return None;
            }
            Some((|| {
                let world = config.initial_world(graph.clone(), simulation)?;
                let timeline = predict(&world, config.horizon)?.timeline;
                let records = compare_pairs(&timeline, &pairs)?;
                let lambda = average_difference(&records)?;
                info!(
                    "alpha {alpha} beta {beta}: lambda {lambda:.3} over {}",
                    records.len()
                );
                Ok(SweepCell {
                    alpha,
                    beta,
                    n: records.len(),
                    lambda,
                    seed: config.seed,
                })
            })())
        })
        .collect();

    let cells: Vec<SweepCell> = cells.into_iter().flatten().collect::<Result<_, _>>()?;
    if cells.is_empty() {
        return Err(HarnessError::NoValidCells);
    }
    Ok(cells)
}

pub fn write_comparisons_csv<W: Write>(
    out: W,
    records: &[ComparisonRecord],
) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(["src", "dst", "T", "tau", "delta"])?;
    for r in records {
        w.write_record([
            r.source.to_string(),
            r.destination.to_string(),
            format!("{:?}", r.static_time),
            format!("{:?}", r.tau),
            format!("{:?}", r.delta),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: W, cells: &[SweepCell]) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(["alpha", "beta", "n", "lambda"])?;
    for c in cells {
        w.write_record([
            c.alpha.to_string(),
            c.beta.to_string(),
            c.n.to_string(),
            c.lambda.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rows `tick,edge_id,dir,k,u,q,tt` for every edge direction and tick.
pub fn write_aggregates_csv<W: Write>(
    out: W,
    ticks: &[TickAggregates],
) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(["tick", "edge_id", "dir", "k", "u", "q", "tt"])?;
    for tick in ticks {
        for f in &tick.flows {
            w.write_record([
                tick.clock.to_string(),
                f.edge_id.to_string(),
                f.direction.as_str().to_string(),
                f.raw_density.to_string(),
                f.mean_speed.to_string(),
                f.flow.to_string(),
                f.travel_time.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write, T: Serialize + ?Sized>(out: W, value: &T) -> Result<(), HarnessError> {
    serde_json::to_writer_pretty(out, value)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::scenario;

    fn record(delta: f64) -> ComparisonRecord {
        ComparisonRecord {
            source: 0,
            destination: 1,
            static_time: delta + 1.0,
            tau: 1.0,
            delta,
            static_cost: 1.0,
        }
    }

    #[test]
    fn average_of_deltas() {
        let r: Vec<_> = [10.0, 0.0, 20.0].map(record).to_vec();
        assert_eq!(average_difference(&r).unwrap(), 10.0);
        assert_eq!(average_difference(&[record(0.0); 4]).unwrap(), 0.0);
        assert!(matches!(
            average_difference(&[]),
            Err(HarnessError::EmptyInput)
        ));
    }

    #[test]
    fn table4_comparison() {
        let tl = scenario::table4_timeline();
        let r = compare_pair(&tl, 0, 9).unwrap();
        assert_eq!(r.tau, 36.0);
        assert_eq!(r.static_cost, 43.0);
        // Static path 0-2-4-6-9 driven through the timeline.
        assert_eq!(
            r.static_time,
            experienced_time(&tl, &[0, 2, 4, 6, 9], 0.0).unwrap()
        );
    }

    #[test]
    fn constant_timeline_has_no_gain() {
        let tl = scenario::table4_timeline();
        let constant = WeightTimeline::constant(
            tl.shared_topology(),
            (0..tl.topology().arc_count())
                .map(|a| (a % 7 + 1) as f64)
                .collect(),
        )
        .unwrap();
        for (s, d) in [(0, 9), (3, 8), (9, 0)] {
            assert_eq!(compare_pair(&constant, s, d).unwrap().delta, 0.0);
        }
    }

    #[test]
    fn pairs_are_distinct_routable_and_seeded() {
        let topology =
            Arc::new(Topology::from_adjacency(vec![vec![1], vec![0], vec![3], vec![2]]).unwrap());
        let pairs = sample_pairs(&topology, 4, 3).unwrap();
        let mut sorted = pairs.clone();
        sorted.sort();
        assert_eq!(sorted, vec![(0, 1), (1, 0), (2, 3), (3, 2)]);
        assert!(matches!(
            sample_pairs(&topology, 5, 3),
            Err(HarnessError::NotEnoughPairs { available: 4, .. })
        ));
        assert_eq!(
            sample_pairs(&topology, 2, 9).unwrap(),
            sample_pairs(&topology, 2, 9).unwrap()
        );
    }

    #[test]
    fn comparison_csv_header() {
        let mut buf = Vec::new();
        write_comparisons_csv(&mut buf, &[record(2.5)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "src,dst,T,tau,delta\n0,1,3.5,1.0,2.5\n"
        );
    }

    #[test]
    fn config_round_trip() {
        let config = ExperimentConfig::default();
        let text = toml::to_string(&config).unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), config);
        let partial =
            ExperimentConfig::parse("seed = 9\npairs = 10\n[simulation]\nalpha = 0.2\n").unwrap();
        assert_eq!((partial.seed, partial.pairs), (9, 10));
        assert_eq!(partial.simulation.alpha, 0.2);
        assert_eq!(partial.simulation.beta, 0.7);
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            grid_rows: 6,
            grid_cols: 6,
            nodes: 20,
            edges: 30,
            vehicles: 40,
            horizon: 120,
            pairs: 30,
            alphas: vec![0.2],
            betas: vec![0.7],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_cell_sweep_matches_comparison() {
        let mut config = small_config();
        config.simulation.alpha = 0.2;
        let cells = alpha_beta_sweep(&config).unwrap();
        let (records, lambda) = run_comparison(&config).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].lambda, lambda);
        assert_eq!(cells[0].n, records.len());
    }

    #[test]
    fn sweep_rejects_all_invalid_cells() {
        let config = ExperimentConfig {
            alphas: vec![0.8, 0.9],
            betas: vec![0.5],
            ..small_config()
        };
        assert!(matches!(
            alpha_beta_sweep(&config),
            Err(HarnessError::NoValidCells)
        ));
    }

    #[test]
    fn sweep_skips_invalid_cells() {
        let config = ExperimentConfig {
            alphas: vec![0.2, 0.8],
            betas: vec![0.5, 0.9],
            ..small_config()
        };
        let cells = alpha_beta_sweep(&config).unwrap();
        let grid: Vec<_> = cells.iter().map(|c| (c.alpha, c.beta)).collect();
        assert_eq!(grid, vec![(0.2, 0.5), (0.2, 0.9), (0.8, 0.9)]);
    }
}
