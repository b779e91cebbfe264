use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::graph::{EdgeId, NodeId, RoadGraph};
use crate::prediction::Thresholds;

/// Additive floor on every choice weight, so an all-empty junction still
/// yields a valid (uniform) distribution.
pub const CHOICE_FLOOR: f64 = 1e-6;

/// Where a vehicle goes after reaching a junction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NextEdge {
    Edge(EdgeId),
    Exit,
}

impl NextEdge {
    /// Edge id with `-1` standing for leaving the network.
    pub fn as_i64(self) -> i64 {
        match self {
            NextEdge::Edge(e) => e as i64,
            NextEdge::Exit => -1,
        }
    }
}

/// How transformed traffic turns into a choice weight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChoiceWeighting {
    /// Weight grows with traffic: busier edges attract more vehicles.
    #[default]
    Proportional,
    /// Weight `1 / (floor + r)`: vehicles avoid busy edges.
    Inverse,
}

impl ChoiceWeighting {
    fn weight(self, transformed: f64) -> f64 {
        match self {
            ChoiceWeighting::Proportional => transformed + CHOICE_FLOOR,
            ChoiceWeighting::Inverse => 1.0 / (CHOICE_FLOOR + transformed),
        }
    }
}

/// Quadratic transformation of edge traffic: `(x / beta)²` up to `beta`,
/// saturating at 1 once the edge is jammed.
pub fn transformation(traffic: f64, thresholds: &Thresholds) -> f64 {
    let x = traffic.max(0.0);
    if x > thresholds.beta() {
        1.0
    } else {
        (x / thresholds.beta()).powi(2)
    }
}

/// Normalised probability of each option when leaving `node`.
///
/// Options are the incident edges in connection order, followed by
/// [`NextEdge::Exit`] when `allow_exit` is set. Each edge is scored on the
/// traffic in the direction that leaves `node`; the exit scores like an edge
/// with no traffic.
pub fn choice_weights(
    graph: &RoadGraph,
    node: NodeId,
    allow_exit: bool,
    thresholds: &Thresholds,
    weighting: ChoiceWeighting,
) -> Result<Vec<(NextEdge, f64)>, SimError> {
    let record = graph.node(node).ok_or(SimError::UnknownNode(node))?;
    if record.edge_connections.is_empty() && !allow_exit {
        return Err(SimError::DeadEnd(node));
    }
    let mut options: Vec<(NextEdge, f64)> = record
        .edge_connections
        .iter()
        .map(|&e| {
            let edge = &graph.edges()[e];
            let dir = edge.direction_from(node).expect("incident edge");
            let r = transformation(edge.traffic(dir), thresholds);
            (NextEdge::Edge(e), weighting.weight(r))
        })
        .collect();
    if allow_exit {
        options.push((
            NextEdge::Exit,
            weighting.weight(transformation(0.0, thresholds)),
        ));
    }
    let sum: f64 = options.iter().map(|(_, w)| w).sum();
    for (_, w) in &mut options {
        *w /= sum;
    }
    Ok(options)
}

/// Samples the next move of a vehicle at `node` from [`choice_weights`].
pub fn select_next_edge<R: Rng + ?Sized>(
    graph: &RoadGraph,
    node: NodeId,
    allow_exit: bool,
    thresholds: &Thresholds,
    weighting: ChoiceWeighting,
    rng: &mut R,
) -> Result<NextEdge, SimError> {
    let options = choice_weights(graph, node, allow_exit, thresholds, weighting)?;
    if options.len() == 1 {
        return Ok(options[0].0);
    }
    let index = WeightedIndex::new(options.iter().map(|(_, w)| *w))
        .expect("weights are positive and finite");
    Ok(options[index.sample(rng)].0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, CategoryTable, Direction, EdgeRecord, NodeRecord};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn star(leaves: usize) -> RoadGraph {
        let cat = *CategoryTable::urban_defaults().get("local").unwrap();
        let nodes = (0..=leaves)
            .map(|i| NodeRecord::new(i, 0.0, 0.0, "x"))
            .collect();
        let edges = (1..=leaves)
            .map(|i| EdgeRecord::new(i - 1, 0, i, 100.0, "local", cat))
            .collect();
        build_graph(nodes, edges).unwrap()
    }

    fn th() -> Thresholds {
        Thresholds::new(0.3, 0.7).unwrap()
    }

    #[test]
    fn transformation_examples() {
        assert_eq!(transformation(0.0, &th()), 0.0);
        assert_eq!(transformation(0.7, &th()), 1.0);
        assert_eq!(transformation(1.4, &th()), 1.0);
        assert!((transformation(0.35, &th()) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_closed_edge_is_certain() {
        let g = star(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(
                select_next_edge(&g, 1, false, &th(), ChoiceWeighting::Proportional, &mut rng)
                    .unwrap(),
                NextEdge::Edge(0)
            );
        }
    }

    #[test]
    fn dead_end_and_open_isolated_node() {
        let g = build_graph(vec![NodeRecord::new(0, 0.0, 0.0, "x")], vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            select_next_edge(&g, 0, false, &th(), ChoiceWeighting::Proportional, &mut rng),
            Err(SimError::DeadEnd(0))
        ));
        assert_eq!(
            select_next_edge(&g, 0, true, &th(), ChoiceWeighting::Proportional, &mut rng).unwrap(),
            NextEdge::Exit
        );
    }

    #[test]
    fn zero_traffic_is_uniform() {
        let g = star(4);
        for weighting in [ChoiceWeighting::Proportional, ChoiceWeighting::Inverse] {
            let w = choice_weights(&g, 0, true, &th(), weighting).unwrap();
            assert_eq!(w.len(), 5);
            for (_, p) in &w {
                assert!((p - 0.2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn direction_appropriate_traffic() {
        let mut g = star(2);
        g.edge_mut(0).forward_traffic = 0.35;
        g.edge_mut(0).backward_traffic = 0.0;
        // From the hub, edge 0 is traversed forward and carries traffic.
        let w = choice_weights(&g, 0, false, &th(), ChoiceWeighting::Proportional).unwrap();
        assert!(w[0].1 > 0.99);
        // From the leaf, the same edge is traversed backward and is empty.
        let w = choice_weights(&g, 1, true, &th(), ChoiceWeighting::Proportional).unwrap();
        assert_eq!(w[0].0, NextEdge::Edge(0));
        assert!((w[0].1 - 0.5).abs() < 1e-12);
        assert_eq!(
            g.edge(0).unwrap().direction_from(1),
            Some(Direction::Backward)
        );
    }

    #[test]
    fn equal_traffic_splits_evenly() {
        let mut g = star(2);
        g.edge_mut(0).forward_traffic = 0.4;
        g.edge_mut(1).forward_traffic = 0.4;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draws = 10_000;
        let first = (0..draws)
            .filter(|_| {
                select_next_edge(&g, 0, false, &th(), ChoiceWeighting::Proportional, &mut rng)
                    .unwrap()
                    == NextEdge::Edge(0)
            })
            .count();
        let freq = first as f64 / draws as f64;
        assert!((freq - 0.5).abs() <= 0.02, "{freq}");
    }

    #[test]
    fn inverse_weighting_prefers_quiet_edges() {
        let mut g = star(2);
        g.edge_mut(0).forward_traffic = 0.6;
        g.edge_mut(1).forward_traffic = 0.1;
        let prop = choice_weights(&g, 0, false, &th(), ChoiceWeighting::Proportional).unwrap();
        let inv = choice_weights(&g, 0, false, &th(), ChoiceWeighting::Inverse).unwrap();
        assert!(prop[0].1 > prop[1].1);
        assert!(inv[0].1 < inv[1].1);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn probabilities_sum_to_one(
                traffic in proptest::collection::vec((0.0f64..3.0, 0.0f64..3.0), 1..6),
                open: bool,
                inverse: bool,
            ) {
                let mut g = star(traffic.len());
                for (i, &(f, b)) in traffic.iter().enumerate() {
                    g.edge_mut(i).forward_traffic = f;
                    g.edge_mut(i).backward_traffic = b;
                }
                let weighting = if inverse { ChoiceWeighting::Inverse } else { ChoiceWeighting::Proportional };
                for node in 0..g.node_count() {
                    let w = choice_weights(&g, node, open, &th(), weighting).unwrap();
                    let sum: f64 = w.iter().map(|(_, p)| p).sum();
                    prop_assert!((sum - 1.0).abs() <= 1e-9);
                    prop_assert!(w.iter().all(|(_, p)| *p > 0.0));
                }
            }

            #[test]
            fn transformation_monotone_and_bounded(a in 0.01f64..0.5, gap in 0.01f64..1.0, x in 0.0f64..3.0, y in 0.0f64..3.0) {
                let th = Thresholds::new(a, a + gap).unwrap();
                let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
                prop_assert!(transformation(lo, &th) <= transformation(hi, &th));
                prop_assert!((0.0..=1.0).contains(&transformation(x, &th)));
                // Continuous across beta.
                let b = th.beta();
                prop_assert!((transformation(b, &th) - transformation(b + 1e-12, &th)).abs() < 1e-9);
            }
        }
    }
}
