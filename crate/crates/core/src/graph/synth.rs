//! Seeded synthetic road networks shaped like a jittered city grid around
//! the San Francisco Bay Area, for experiments when no dataset is supplied.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_graph, CategoryTable, EdgeRecord, NodeRecord, RoadGraph};

const ORIGIN_LAT: f64 = 37.30;
const ORIGIN_LON: f64 = -121.95;
/// Roughly 400 m between neighbouring grid points in both axes.
const LAT_STEP: f64 = 0.0036;
const LON_STEP: f64 = 0.0045;
const EARTH_RADIUS_M: f64 = 6_371_000.0;

const STREET_PROBABILITY: f64 = 0.85;
const DIAGONAL_PROBABILITY: f64 = 0.15;
const GATEWAY_PROBABILITY: f64 = 0.25;
const GATEWAY_SIGMA: f64 = 0.5;

fn haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().asin()
}

/// Builds a `rows × cols` jittered grid. Streets join grid neighbours with
/// high probability, occasional diagonals cut across blocks, and some border
/// nodes are gateways with a positive external inflow mean.
///
/// Panics if `categories` is empty.
pub fn synthetic_network(
    rows: usize,
    cols: usize,
    seed: u64,
    categories: &CategoryTable,
) -> RoadGraph {
    let names: Vec<&str> = categories.names().collect();
    assert!(!names.is_empty(), "category table is empty");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut nodes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let lat = ORIGIN_LAT + (r as f64 + rng.random_range(-0.25..0.25)) * LAT_STEP;
            let lon = ORIGIN_LON + (c as f64 + rng.random_range(-0.25..0.25)) * LON_STEP;
            let border = r == 0 || c == 0 || r + 1 == rows || c + 1 == cols;
            let node = if border && rng.random_bool(GATEWAY_PROBABILITY) {
                NodeRecord::new(nodes.len(), lat, lon, "gateway")
                    .with_inflow(rng.random_range(0.2..1.0), GATEWAY_SIGMA)
            } else {
                NodeRecord::new(nodes.len(), lat, lon, "junction")
            };
            nodes.push(node);
        }
    }

    let mut edges = Vec::new();
    let link = |a: usize, b: usize, rng: &mut ChaCha8Rng, edges: &mut Vec<EdgeRecord>| {
        let (na, nb) = (&nodes[a], &nodes[b]);
        let straight = haversine(na.latitude, na.longitude, nb.latitude, nb.longitude);
        let distance = (straight * rng.random_range(1.0..1.15)).max(50.0).round();
        let name = names[rng.random_range(0..names.len())];
        let params = *categories.get(name).expect("name from table");
        edges.push(EdgeRecord::new(edges.len(), a, b, distance, name, params));
    };
    for r in 0..rows {
        for c in 0..cols {
            let here = r * cols + c;
            if c + 1 < cols && rng.random_bool(STREET_PROBABILITY) {
                link(here, here + 1, &mut rng, &mut edges);
            }
            if r + 1 < rows && rng.random_bool(STREET_PROBABILITY) {
                link(here, here + cols, &mut rng, &mut edges);
            }
            if r + 1 < rows && c + 1 < cols && rng.random_bool(DIAGONAL_PROBABILITY) {
                link(here, here + cols + 1, &mut rng, &mut edges);
            }
        }
    }
    build_graph(nodes, edges).expect("grid construction yields a valid graph")
}
