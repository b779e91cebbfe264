use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::graph::NodeRecord;

/// Draws the number of vehicles entering at `node` this tick.
///
/// One normal sample with the node's mean and sigma, rounded to the nearest
/// integer and clamped at zero. The count is stored as the node's external
/// vehicle count and, when `chain_mean` is set, becomes the node's mean for
/// the next draw.
pub fn sample_external_arrivals<R: Rng + ?Sized>(
    node: &mut NodeRecord,
    chain_mean: bool,
    rng: &mut R,
) -> u64 {
    let count = match Normal::new(node.gaussian_mean, node.gaussian_sigma) {
        Ok(normal) => normal.sample(rng).round().max(0.0) as u64,
        Err(_) => 0,
    };
    node.external_vehicle_count = count;
    if chain_mean {
        node.gaussian_mean = count as f64;
    }
    count
}
