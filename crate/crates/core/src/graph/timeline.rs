use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{GraphError, NodeId, Result};

/// Directed arcs in compressed sparse row form. Targets of each node are
/// strictly increasing, and an arc's index is its position in the target array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
}

impl Topology {
    pub fn from_adjacency(adjacency: Vec<Vec<NodeId>>) -> Result<Self> {
        let n = adjacency.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for (u, list) in adjacency.into_iter().enumerate() {
            for (i, &v) in list.iter().enumerate() {
                if v >= n {
                    return Err(GraphError::InvalidTimeline(format!(
                        "arc {u}->{v} leaves the {n}-node range"
                    )));
                }
                if v == u {
                    return Err(GraphError::InvalidTimeline(format!("self-loop on {u}")));
                }
                if i > 0 && list[i - 1] >= v {
                    return Err(GraphError::InvalidTimeline(format!(
                        "targets of {u} are not strictly increasing"
                    )));
                }
            }
            targets.extend(list);
            offsets.push(targets.len());
        }
        Ok(Topology { offsets, targets })
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn arc_count(&self) -> usize {
        self.targets.len()
    }

    pub fn arc_range(&self, u: NodeId) -> Range<usize> {
        self.offsets[u]..self.offsets[u + 1]
    }

    pub fn targets(&self, u: NodeId) -> &[NodeId] {
        &self.targets[self.arc_range(u)]
    }

    pub fn arc_index(&self, u: NodeId, v: NodeId) -> Option<usize> {
        if u >= self.node_count() {
            return None;
        }
        let range = self.arc_range(u);
        let start = range.start;
        self.targets[range]
            .binary_search(&v)
            .ok()
            .map(|i| start + i)
    }

    /// All arcs as `(from, to)` in index order.
    pub fn arcs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.node_count()).flat_map(move |u| self.targets(u).iter().map(move |&v| (u, v)))
    }

    /// Nodes reachable from `source`, ignoring weights.
    pub fn reachable_from(&self, source: NodeId) -> Vec<bool> {
        let mut seen = vec![false; self.node_count()];
        let mut stack = vec![source];
        seen[source] = true;
        while let Some(u) = stack.pop() {
            for &v in self.targets(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

/// Borrowed travel-time matrix for one timestamp. Entries for non-adjacent
/// node pairs are absent.
#[derive(Debug, Clone, Copy)]
pub struct WeightMatrix<'a> {
    topology: &'a Topology,
    weights: &'a [f64],
}

impl<'a> WeightMatrix<'a> {
    pub fn new(topology: &'a Topology, weights: &'a [f64]) -> Self {
        assert_eq!(topology.arc_count(), weights.len(), "one weight per arc");
        WeightMatrix { topology, weights }
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn topology(&self) -> &'a Topology {
        self.topology
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> Option<f64> {
        self.topology.arc_index(from, to).map(|i| self.weights[i])
    }

    /// `(neighbour, weight)` pairs in increasing neighbour order.
    pub fn outgoing(&self, from: NodeId) -> impl Iterator<Item = (NodeId, f64)> + 'a {
        let range = self.topology.arc_range(from);
        self.topology.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn to_dense(&self) -> Vec<Vec<Option<f64>>> {
        let n = self.node_count();
        let mut dense = vec![vec![None; n]; n];
        for (i, (u, v)) in self.topology.arcs().enumerate() {
            dense[u][v] = Some(self.weights[i]);
        }
        dense
    }
}

/// Timestamp-keyed sequence of travel-time matrices over a fixed topology.
///
/// Lookups between recorded timestamps use the most recent earlier snapshot;
/// queries past the last timestamp use the last snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTimeline {
    topology: Arc<Topology>,
    timestamps: Vec<u64>,
    weights: Vec<Vec<f64>>,
}

/// Result of reading a timeline document.
#[derive(Debug, Clone)]
pub struct ParsedTimeline {
    pub timeline: WeightTimeline,
    /// Snapshot blocks present in the document, before merging duplicates.
    pub blocks: usize,
}

impl WeightTimeline {
    pub fn new(topology: Arc<Topology>) -> Self {
        WeightTimeline {
            topology,
            timestamps: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// A timeline with one snapshot at t = 0.
    pub fn constant(topology: Arc<Topology>, weights: Vec<f64>) -> Result<Self> {
        let mut timeline = WeightTimeline::new(topology);
        timeline.push(0, weights)?;
        Ok(timeline)
    }

    /// Appends a snapshot. The first must be at t = 0 and timestamps must
    /// strictly increase; every weight must be positive and finite.
    pub fn push(&mut self, timestamp: u64, weights: Vec<f64>) -> Result<()> {
        match self.timestamps.last() {
            None if timestamp != 0 => {
                return Err(GraphError::InvalidTimeline(format!(
                    "first timestamp must be 0, got {timestamp}"
                )))
            }
            Some(&last) if timestamp <= last => {
                return Err(GraphError::InvalidTimeline(format!(
                    "timestamp {timestamp} does not follow {last}"
                )))
            }
            _ => {}
        }
        if weights.len() != self.topology.arc_count() {
            return Err(GraphError::InvalidTimeline(format!(
                "expected {} weights, got {}",
                self.topology.arc_count(),
                weights.len()
            )));
        }
        if let Some((i, &w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            let (from, to) = self.topology.arcs().nth(i).expect("index in range");
            return Err(GraphError::NonPositiveWeight {
                from,
                to,
                timestamp,
                weight: w,
            });
        }
        self.timestamps.push(timestamp);
        self.weights.push(weights);
        Ok(())
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn shared_topology(&self) -> Arc<Topology> {
        Arc::clone(&self.topology)
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn snapshot(&self, index: usize) -> WeightMatrix<'_> {
        WeightMatrix::new(&self.topology, &self.weights[index])
    }

    /// Index of the snapshot in force at time `t`.
    pub fn index_at(&self, t: f64) -> Result<usize> {
        if self.timestamps.is_empty() {
            return Err(GraphError::EmptyTimeline);
        }
        if t.is_nan() || t < 0.0 {
            return Err(GraphError::InvalidTime(t));
        }
        // Timestamps are integers, so k <= t  <=>  k <= floor(t).
        let floor = if t >= u64::MAX as f64 {
            u64::MAX
        } else {
            t.floor() as u64
        };
        Ok(self.timestamps.partition_point(|&k| k <= floor) - 1)
    }

    pub fn weights_at(&self, t: f64) -> Result<WeightMatrix<'_>> {
        self.index_at(t).map(|i| self.snapshot(i))
    }

    /// Single-arc lookup at time `t`.
    pub fn weight(&self, from: NodeId, to: NodeId, t: f64) -> Result<Option<f64>> {
        let index = self.index_at(t)?;
        Ok(self
            .topology
            .arc_index(from, to)
            .map(|arc| self.weights[index][arc]))
    }

    /// True when every snapshot carries the same weights.
    pub fn is_constant(&self) -> bool {
        self.weights.windows(2).all(|w| w[0] == w[1])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_document(text).map(|p| p.timeline)
    }

    /// Parses the TOML timeline format:
    ///
    /// ```toml
    /// node_count = 3        # optional, defaults to max id + 1
    /// symmetric = true      # list each undirected pair once
    /// [[snapshot]]
    /// timestamp = 0
    /// arcs = [[0, 1, 8], [1, 2, 6.5]]
    /// ```
    ///
    /// Snapshots may appear in any order. Repeated timestamps are merged when
    /// their weights agree and rejected otherwise.
    pub fn parse_document(text: &str) -> Result<ParsedTimeline> {
        let doc: TimelineDocument = toml::from_str(text).map_err(|e| GraphError::Parse {
            what: "timeline",
            reason: e.to_string(),
        })?;
        if doc.snapshot.is_empty() {
            return Err(GraphError::InvalidTimeline("no snapshots".into()));
        }
        let blocks = doc.snapshot.len();

        let mut parsed: Vec<(u64, ArcWeights)> = Vec::with_capacity(blocks);
        for block in &doc.snapshot {
            let mut arcs = BTreeMap::new();
            for &(u, v, w) in &block.arcs {
                let mut insert = |a: NodeId, b: NodeId| -> Result<()> {
                    if arcs.insert((a, b), w).is_some() {
                        return Err(GraphError::InvalidTimeline(format!(
                            "arc {a}->{b} listed twice at t={}",
                            block.timestamp
                        )));
                    }
                    Ok(())
                };
                insert(u, v)?;
                if doc.symmetric {
                    insert(v, u)?;
                }
            }
            parsed.push((block.timestamp, arcs));
        }
        parsed.sort_by_key(|(t, _)| *t);

        let node_count = match doc.node_count {
            Some(n) => n,
            None => parsed[0]
                .1
                .keys()
                .map(|&(u, v)| u.max(v) + 1)
                .max()
                .unwrap_or(0),
        };
        let mut adjacency = vec![Vec::new(); node_count];
        for &(u, v) in parsed[0].1.keys() {
            if u >= node_count || v >= node_count {
                return Err(GraphError::InvalidTimeline(format!(
                    "arc {u}->{v} exceeds node_count {node_count}"
                )));
            }
            adjacency[u].push(v);
        }
        let topology = Arc::new(Topology::from_adjacency(adjacency)?);

        let mut timeline = WeightTimeline::new(topology);
        let mut previous: Option<(u64, &ArcWeights)> = None;
        for (t, arcs) in &parsed {
            if !arcs.keys().eq(parsed[0].1.keys()) {
                return Err(GraphError::InvalidTimeline(format!(
                    "arc set at t={t} differs from t={}",
                    parsed[0].0
                )));
            }
            if let Some((pt, parcs)) = previous {
                if pt == *t {
                    if parcs != arcs {
                        return Err(GraphError::InvalidTimeline(format!(
                            "conflicting snapshots for t={t}"
                        )));
                    }
                    continue;
                }
            }
            timeline.push(*t, arcs.values().copied().collect())?;
            previous = Some((*t, arcs));
        }
        Ok(ParsedTimeline { timeline, blocks })
    }

    /// Serializes every arc explicitly (`symmetric = false`).
    pub fn to_toml_string(&self) -> String {
        let doc = TimelineDocument {
            node_count: Some(self.node_count()),
            symmetric: false,
            snapshot: self
                .timestamps
                .iter()
                .zip(&self.weights)
                .map(|(&timestamp, weights)| SnapshotDocument {
                    timestamp,
                    arcs: self
                        .topology
                        .arcs()
                        .zip(weights)
                        .map(|((u, v), &w)| (u, v, w))
                        .collect(),
                })
                .collect(),
        };
        toml::to_string(&doc).expect("timeline document serializes")
    }
}

type ArcWeights = BTreeMap<(NodeId, NodeId), f64>;

#[derive(Debug, Serialize, Deserialize)]
struct TimelineDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_count: Option<usize>,
    #[serde(default)]
    symmetric: bool,
    snapshot: Vec<SnapshotDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotDocument {
    timestamp: u64,
    arcs: Vec<(NodeId, NodeId, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TABLE4: &str = include_str!("../../scenarios/table4_timeline.toml");

    fn line_topology() -> Arc<Topology> {
        Arc::new(Topology::from_adjacency(vec![vec![1], vec![0, 2], vec![1]]).unwrap())
    }

    #[test]
    fn table4_lookup() {
        let parsed = WeightTimeline::parse_document(TABLE4).unwrap();
        let tl = parsed.timeline;
        assert_eq!(parsed.blocks, 8);
        assert_eq!(tl.timestamps(), &[0, 6, 8, 14, 18, 20, 32]);
        assert_eq!(tl.weights_at(0.0).unwrap().get(0, 1), Some(8.0));
        assert_eq!(tl.weights_at(0.0).unwrap().get(1, 0), Some(8.0));
        // Last key at or before 7 is 6.
        assert_eq!(tl.weights_at(7.0).unwrap().get(1, 3), Some(13.0));
        assert_eq!(tl.weights_at(6.0).unwrap().get(0, 1), Some(1.0));
        assert_eq!(tl.weights_at(1000.0).unwrap().get(7, 9), Some(4.0));
        assert_eq!(tl.weights_at(0.0).unwrap().get(0, 9), None);
    }

    #[test]
    fn single_key_timeline() {
        let tl = WeightTimeline::constant(line_topology(), vec![1.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(tl.weights_at(0.0).unwrap().get(1, 2), Some(2.0));
        assert_eq!(tl.weights_at(55.5).unwrap().get(1, 2), Some(2.0));
    }

    #[test]
    fn empty_timeline_and_bad_times() {
        let tl = WeightTimeline::new(line_topology());
        assert!(matches!(tl.weights_at(0.0), Err(GraphError::EmptyTimeline)));
        let tl = WeightTimeline::constant(line_topology(), vec![1.0; 4]).unwrap();
        assert!(matches!(
            tl.weights_at(-1.0),
            Err(GraphError::InvalidTime(_))
        ));
        assert!(matches!(
            tl.weights_at(f64::NAN),
            Err(GraphError::InvalidTime(_))
        ));
    }

    #[test]
    fn push_validates() {
        let mut tl = WeightTimeline::new(line_topology());
        assert!(tl.push(3, vec![1.0; 4]).is_err());
        tl.push(0, vec![1.0; 4]).unwrap();
        assert!(tl.push(0, vec![1.0; 4]).is_err());
        assert!(tl.push(5, vec![1.0; 3]).is_err());
        assert!(matches!(
            tl.push(5, vec![1.0, 0.0, 1.0, 1.0]),
            Err(GraphError::NonPositiveWeight { from: 1, to: 0, .. })
        ));
    }

    #[test]
    fn document_errors() {
        let conflicting = "[[snapshot]]\ntimestamp = 0\narcs = [[0,1,2]]\n[[snapshot]]\ntimestamp = 0\narcs = [[0,1,3]]\n";
        assert!(WeightTimeline::parse(conflicting).is_err());
        let sparsity = "[[snapshot]]\ntimestamp = 0\narcs = [[0,1,2]]\n[[snapshot]]\ntimestamp = 4\narcs = [[1,0,3]]\n";
        assert!(WeightTimeline::parse(sparsity).is_err());
        let late_start = "[[snapshot]]\ntimestamp = 2\narcs = [[0,1,2]]\n";
        assert!(WeightTimeline::parse(late_start).is_err());
        let zero = "[[snapshot]]\ntimestamp = 0\narcs = [[0,1,0]]\n";
        assert!(matches!(
            WeightTimeline::parse(zero),
            Err(GraphError::NonPositiveWeight { .. })
        ));
    }

    #[test]
    fn asymmetric_document() {
        let text = "[[snapshot]]\ntimestamp = 0\narcs = [[0,1,2], [1,0,5]]\n";
        let tl = WeightTimeline::parse(text).unwrap();
        let m = tl.weights_at(0.0).unwrap();
        assert_eq!((m.get(0, 1), m.get(1, 0)), (Some(2.0), Some(5.0)));
    }

    #[test]
    fn serialization_round_trip() {
        let tl = WeightTimeline::parse(TABLE4).unwrap();
        let again = WeightTimeline::parse(&tl.to_toml_string()).unwrap();
        assert_eq!(tl, again);
    }

    proptest! {
        #[test]
        fn step_lookup_is_floor(keys in proptest::collection::btree_set(1u64..200, 0..6), t in 0.0f64..300.0) {
            let mut tl = WeightTimeline::new(line_topology());
            let mut all = vec![0u64];
            all.extend(keys);
            for (i, &k) in all.iter().enumerate() {
                tl.push(k, vec![(i + 1) as f64; 4]).unwrap();
            }
            let expect = all.iter().rposition(|&k| k as f64 <= t).unwrap();
            prop_assert_eq!(tl.index_at(t).unwrap(), expect);
            prop_assert_eq!(tl.weights_at(t).unwrap().get(0, 1), Some((expect + 1) as f64));
        }
    }
}
