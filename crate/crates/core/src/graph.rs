//! Directed weighted topologies, leader configurations, epoch sequences, and
//! the topology generators used by the experiment harness.
//!
//! Nodes are indexed `0..n` in the API; the JSON schema is 1-based.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::{scalar, Matrix, Scalar};

/// How many placement attempts a generator makes before giving up on
/// strong connectivity.
pub const GENERATION_RETRY_LIMIT: usize = 1000;

/// A directed weighted graph with per-edge averaging gains.
///
/// Edge weights are nonnegative; self-loops are rejected. Strong
/// connectivity is computed once at construction and carried as metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology<T: Scalar> {
    n: usize,
    edges: BTreeMap<(usize, usize), T>,
    strongly_connected: bool,
}

impl<T: Scalar> Topology<T> {
    /// Build a topology from directed weighted edges, validating indices,
    /// self-loops, and weight signs.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Numerical("topology needs at least one node".into()));
        }
        let mut map = BTreeMap::new();
        for (from, to, weight) in edges {
            if from >= n {
                return Err(Error::NodeOutOfRange { node: from, n });
            }
            if to >= n {
                return Err(Error::NodeOutOfRange { node: to, n });
            }
            if from == to {
                return Err(Error::SelfLoop(from));
            }
            if weight < T::zero() {
                return Err(Error::NegativeWeight {
                    from,
                    to,
                    weight: weight.to_f64().unwrap_or(f64::NAN),
                });
            }
            map.insert((from, to), weight);
        }
        let strongly_connected = strongly_connected_from_edges(n, map.keys().copied());
        Ok(Self {
            n,
            edges: map,
            strongly_connected,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// True iff a directed path exists between every ordered node pair.
    pub fn is_strongly_connected(&self) -> bool {
        self.strongly_connected
    }

    pub fn weight(&self, from: usize, to: usize) -> Option<T> {
        self.edges.get(&(from, to)).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.edges.iter().map(|(&(i, j), &w)| (i, j, w))
    }

    /// Out-neighbors of `node` with their weights, in ascending index order.
    pub fn out_neighbors(&self, node: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        self.edges
            .range((node, 0)..(node + 1, 0))
            .map(|(&(_, j), &w)| (j, w))
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.out_neighbors(node).count()
    }

    /// Unordered node pairs joined by at least one directed edge.
    pub fn undirected_links(&self) -> BTreeSet<(usize, usize)> {
        self.edges
            .keys()
            .map(|&(i, j)| if i < j { (i, j) } else { (j, i) })
            .collect()
    }

    /// Smallest strictly positive edge weight, if any edge has one.
    pub fn min_positive_weight(&self) -> Option<T> {
        self.edges
            .values()
            .filter(|w| **w > T::zero())
            .copied()
            .fold(None, |acc, w| match acc {
                None => Some(w),
                Some(a) => Some(if w < a { w } else { a }),
            })
    }
}

/// Compute strong connectivity by two sweeps of iterative depth-first
/// search (forward and on the reversed graph) from node 0.
fn strongly_connected_from_edges(
    n: usize,
    edges: impl IntoIterator<Item = (usize, usize)>,
) -> bool {
    let mut fwd = vec![Vec::new(); n];
    let mut rev = vec![Vec::new(); n];
    for (i, j) in edges {
        fwd[i].push(j);
        rev[j].push(i);
    }
    reaches_all(n, &fwd) && reaches_all(n, &rev)
}

fn reaches_all(n: usize, adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

/// Leader-absorbing Laplacian: follower rows carry degree/negated-weight
/// entries, leader rows are identically zero.
pub fn build_laplacian<T: Scalar>(topo: &Topology<T>, leaders: &[usize]) -> Result<Matrix<T>> {
    let n = topo.n();
    let mask = leader_mask(n, leaders)?;
    let mut l = Matrix::zeros((n, n));
    for i in 0..n {
        if mask[i] {
            continue;
        }
        let mut degree = T::zero();
        for (j, w) in topo.out_neighbors(i) {
            l[[i, j]] = -w;
            degree += w;
        }
        l[[i, i]] = degree;
    }
    Ok(l)
}

/// Validate a leader list against `n` nodes and return a membership mask.
/// Duplicates are tolerated (set semantics).
pub(crate) fn leader_mask(n: usize, leaders: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; n];
    for &v in leaders {
        if v >= n {
            return Err(Error::NodeOutOfRange { node: v, n });
        }
        mask[v] = true;
    }
    Ok(mask)
}

/// A leader set with per-leader anchor states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderConfig<T: Scalar> {
    leaders: Vec<usize>,
    anchors: Vec<T>,
}

impl<T: Scalar> LeaderConfig<T> {
    /// `anchors[i]` is the constant state held by `leaders[i]`.
    pub fn new(leaders: Vec<usize>, anchors: Vec<T>) -> Result<Self> {
        if leaders.len() != anchors.len() {
            return Err(Error::AnchorArity {
                leaders: leaders.len(),
                anchors: anchors.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for &v in &leaders {
            if !seen.insert(v) {
                return Err(Error::DuplicateLeader(v));
            }
        }
        Ok(Self { leaders, anchors })
    }

    /// All leaders anchored at the same state.
    pub fn uniform(leaders: Vec<usize>, anchor: T) -> Result<Self> {
        let anchors = vec![anchor; leaders.len()];
        Self::new(leaders, anchors)
    }

    pub fn leaders(&self) -> &[usize] {
        &self.leaders
    }

    pub fn anchors(&self) -> &[T] {
        &self.anchors
    }

    pub fn anchor_of(&self, node: usize) -> Option<T> {
        self.leaders
            .iter()
            .position(|&v| v == node)
            .map(|k| self.anchors[k])
    }

    pub fn is_empty(&self) -> bool {
        self.leaders.is_empty()
    }

    /// Convex hull `[min, max]` of the anchor states. States are scalar, so
    /// the hull is a closed interval.
    pub fn hull(&self) -> Result<(T, T)> {
        if self.anchors.is_empty() {
            return Err(Error::EmptyLeaderSet);
        }
        let mut lo = self.anchors[0];
        let mut hi = self.anchors[0];
        for &a in &self.anchors[1..] {
            if a < lo {
                lo = a;
            }
            if a > hi {
                hi = a;
            }
        }
        Ok((lo, hi))
    }
}

/// One constant-topology interval of a switched network.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch<T: Scalar> {
    pub topology: Topology<T>,
    pub dwell: T,
}

/// A time-stamped sequence of topologies with positive dwell times.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSequence<T: Scalar> {
    start_time: T,
    epochs: Vec<Epoch<T>>,
}

impl<T: Scalar> EpochSequence<T> {
    pub fn new(start_time: T, epochs: Vec<(Topology<T>, T)>) -> Result<Self> {
        if epochs.is_empty() {
            return Err(Error::EmptySequence);
        }
        let epochs = epochs
            .into_iter()
            .map(|(topology, dwell)| {
                if dwell <= T::zero() {
                    Err(Error::InvalidDwell(dwell.to_f64().unwrap_or(f64::NAN)))
                } else {
                    Ok(Epoch { topology, dwell })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { start_time, epochs })
    }

    pub fn start_time(&self) -> T {
        self.start_time
    }

    pub fn epochs(&self) -> &[Epoch<T>] {
        &self.epochs
    }

    /// Number of epochs `r`.
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Minimum dwell time over all epochs.
    pub fn min_dwell(&self) -> T {
        self.epochs
            .iter()
            .map(|e| e.dwell)
            .fold(T::infinity(), |a, d| if d < a { d } else { a })
    }

    /// Total duration covered by the sequence.
    pub fn total_duration(&self) -> T {
        self.epochs.iter().map(|e| e.dwell).sum()
    }

    pub fn n(&self) -> usize {
        self.epochs[0].topology.n()
    }
}

/// Parameters for random geometric placement in a square.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricParams {
    pub n: usize,
    pub area_side: f64,
    pub comm_range: f64,
    /// Each directed edge weight is drawn uniformly from this interval.
    pub weight_range: (f64, f64),
    /// Force `W[i][j] == W[j][i]` (one draw per link instead of two).
    pub symmetric_weights: bool,
}

impl GeometricParams {
    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Numerical(
                "geometric generator needs at least two nodes".into(),
            ));
        }
        if self.comm_range <= 0.0 {
            return Err(Error::Numerical("communication range must be positive".into()));
        }
        let (lo, hi) = self.weight_range;
        if lo < 0.0 || hi < lo {
            return Err(Error::Numerical(format!(
                "weight range [{lo}, {hi}] must satisfy 0 <= lo <= hi"
            )));
        }
        Ok(())
    }
}

fn sample_positions(params: &GeometricParams, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    (0..params.n)
        .map(|_| {
            (
                rng.gen::<f64>() * params.area_side,
                rng.gen::<f64>() * params.area_side,
            )
        })
        .collect()
}

fn links_within_range(positions: &[(f64, f64)], comm_range: f64) -> Vec<(usize, usize)> {
    let mut links = Vec::new();
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let dx = positions[i].0 - positions[j].0;
            let dy = positions[i].1 - positions[j].1;
            if (dx * dx + dy * dy).sqrt() <= comm_range {
                links.push((i, j));
            }
        }
    }
    links
}

fn draw_weight(range: (f64, f64), rng: &mut impl Rng) -> f64 {
    range.0 + rng.gen::<f64>() * (range.1 - range.0)
}

/// Place `n` nodes uniformly at random in the square and connect nodes within
/// communication range with a bidirectional edge pair. Placements are
/// resampled until the result is strongly connected.
pub fn gen_geometric<T: Scalar>(params: &GeometricParams, rng: &mut impl Rng) -> Result<Topology<T>> {
    params.validate()?;
    for _ in 0..GENERATION_RETRY_LIMIT {
        let positions = sample_positions(params, rng);
        let links = links_within_range(&positions, params.comm_range);
        if !strongly_connected_from_edges(
            params.n,
            links.iter().flat_map(|&(i, j)| [(i, j), (j, i)]),
        ) {
            continue;
        }
        let mut edges = Vec::with_capacity(2 * links.len());
        for &(i, j) in &links {
            let w_ij = draw_weight(params.weight_range, rng);
            let w_ji = if params.symmetric_weights {
                w_ij
            } else {
                draw_weight(params.weight_range, rng)
            };
            edges.push((i, j, scalar(w_ij)));
            edges.push((j, i, scalar(w_ji)));
        }
        return Topology::new(params.n, edges);
    }
    Err(Error::GenerationFailed {
        attempts: GENERATION_RETRY_LIMIT,
    })
}

/// Per-epoch topologies obtained by removing each undirected link of `base`
/// independently with probability `fail_prob` (both directions together).
/// Epochs are independent; disconnected epochs are permitted.
pub fn gen_link_failures<T: Scalar>(
    base: &Topology<T>,
    fail_prob: f64,
    epochs: usize,
    dwell: f64,
    rng: &mut impl Rng,
) -> Result<EpochSequence<T>> {
    if !(0.0..1.0).contains(&fail_prob) {
        return Err(Error::InvalidProbability(fail_prob));
    }
    if !base.is_strongly_connected() {
        return Err(Error::NotStronglyConnected);
    }
    if epochs == 0 {
        return Err(Error::EmptySequence);
    }
    let links = base.undirected_links();
    let mut out = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut edges = Vec::new();
        for &(i, j) in &links {
            if rng.gen::<f64>() < fail_prob {
                continue;
            }
            if let Some(w) = base.weight(i, j) {
                edges.push((i, j, w));
            }
            if let Some(w) = base.weight(j, i) {
                edges.push((j, i, w));
            }
        }
        out.push((Topology::new(base.n(), edges)?, scalar(dwell)));
    }
    EpochSequence::new(T::zero(), out)
}

/// Parameters for the waypoint mobility generator.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointParams {
    pub geometric: GeometricParams,
    /// Reference-state speed; the reference advances `ref_speed * dwell` per
    /// epoch in a uniformly random direction, reflecting at the boundary.
    pub ref_speed: f64,
    /// Per-node positional disturbance magnitude interval.
    pub disturbance_range: (f64, f64),
    pub epochs: usize,
    pub dwell: f64,
}

/// Waypoint mobility: nodes hold fixed offsets relative to a moving reference
/// state, plus a fresh uniform disturbance each epoch. Edges are recomputed
/// per epoch from pairwise distances; link weights are drawn once per node
/// pair and reused whenever the link is present, so a static configuration
/// yields identical epochs.
pub fn gen_waypoint<T: Scalar>(params: &WaypointParams, rng: &mut impl Rng) -> Result<EpochSequence<T>> {
    params.geometric.validate()?;
    if params.epochs == 0 {
        return Err(Error::EmptySequence);
    }
    if params.dwell <= 0.0 {
        return Err(Error::InvalidDwell(params.dwell));
    }
    let (dlo, dhi) = params.disturbance_range;
    if dlo < 0.0 || dhi < dlo {
        return Err(Error::Numerical(format!(
            "disturbance range [{dlo}, {dhi}] must satisfy 0 <= lo <= hi"
        )));
    }
    if params.ref_speed < 0.0 {
        return Err(Error::Numerical("reference speed must be nonnegative".into()));
    }

    let n = params.geometric.n;
    let side = params.geometric.area_side;
    let offsets = sample_positions(&params.geometric, rng);

    // Stable per-pair weights, lexicographic pair order.
    let mut pair_weights = BTreeMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let w_ij = draw_weight(params.geometric.weight_range, rng);
            let w_ji = if params.geometric.symmetric_weights {
                w_ij
            } else {
                draw_weight(params.geometric.weight_range, rng)
            };
            pair_weights.insert((i, j), (w_ij, w_ji));
        }
    }

    let mut reference = (side / 2.0, side / 2.0);
    let step = params.ref_speed * params.dwell;
    let mut out = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        if epoch > 0 && step > 0.0 {
            let angle = rng.gen::<f64>() * std::f64::consts::TAU;
            reference.0 = reflect(reference.0 + step * angle.cos(), side);
            reference.1 = reflect(reference.1 + step * angle.sin(), side);
        }
        let positions: Vec<(f64, f64)> = offsets
            .iter()
            .map(|&(ox, oy)| {
                let (dx, dy) = if dhi > 0.0 {
                    let mag = dlo + rng.gen::<f64>() * (dhi - dlo);
                    let angle = rng.gen::<f64>() * std::f64::consts::TAU;
                    (mag * angle.cos(), mag * angle.sin())
                } else {
                    (0.0, 0.0)
                };
                (reference.0 + ox + dx, reference.1 + oy + dy)
            })
            .collect();
        let mut edges = Vec::new();
        for (i, j) in links_within_range(&positions, params.geometric.comm_range) {
            let &(w_ij, w_ji) = pair_weights.get(&(i, j)).expect("pair weight exists");
            edges.push((i, j, scalar(w_ij)));
            edges.push((j, i, scalar(w_ji)));
        }
        out.push((Topology::new(n, edges)?, scalar(params.dwell)));
    }
    EpochSequence::new(T::zero(), out)
}

/// Reflect a coordinate into `[0, side]`.
fn reflect(x: f64, side: f64) -> f64 {
    let period = 2.0 * side;
    let mut r = x.rem_euclid(period);
    if r > side {
        r = period - r;
    }
    r
}

/// Link-failure process over a fixed base topology, as a seedable
/// distribution of epoch sequences.
#[derive(Debug, Clone)]
pub struct LinkFailureModel<T: Scalar> {
    pub base: Topology<T>,
    pub fail_prob: f64,
    pub epochs: usize,
    pub dwell: f64,
}

impl<T: Scalar> crate::dynamics::SequenceDistribution<T> for LinkFailureModel<T> {
    fn sample(&self, seed: u64) -> Result<EpochSequence<T>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        gen_link_failures(&self.base, self.fail_prob, self.epochs, self.dwell, &mut rng)
    }
}

/// Waypoint mobility process as a seedable distribution of epoch sequences.
#[derive(Debug, Clone)]
pub struct WaypointModel {
    pub params: WaypointParams,
}

impl<T: Scalar> crate::dynamics::SequenceDistribution<T> for WaypointModel {
    fn sample(&self, seed: u64) -> Result<EpochSequence<T>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        gen_waypoint(&self.params, &mut rng)
    }
}

// ---------------------------------------------------------------------------
// JSON schema (1-based node ids)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct EdgeRepr<T> {
    from: usize,
    to: usize,
    weight: T,
}

#[derive(Serialize, Deserialize)]
struct TopologyRepr<T> {
    n: usize,
    strongly_connected: bool,
    edges: Vec<EdgeRepr<T>>,
}

impl<T: Scalar + Serialize> Serialize for Topology<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = TopologyRepr {
            n: self.n,
            strongly_connected: self.strongly_connected,
            edges: self
                .edges()
                .map(|(i, j, w)| EdgeRepr {
                    from: i + 1,
                    to: j + 1,
                    weight: w,
                })
                .collect(),
        };
        repr.serialize(serializer)
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for Topology<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = TopologyRepr::<T>::deserialize(deserializer)?;
        let edges = repr
            .edges
            .into_iter()
            .map(|e| {
                if e.from == 0 || e.to == 0 {
                    Err(D::Error::custom("node ids are 1-based"))
                } else {
                    Ok((e.from - 1, e.to - 1, e.weight))
                }
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let topo = Topology::new(repr.n, edges).map_err(D::Error::custom)?;
        if repr.strongly_connected && !topo.is_strongly_connected() {
            return Err(D::Error::custom(
                "topology flagged strongly_connected but is not",
            ));
        }
        Ok(topo)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: serde::de::DeserializeOwned"
))]
struct EpochRepr<T: Scalar> {
    dwell: T,
    topology: Topology<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: serde::de::DeserializeOwned"
))]
struct SequenceRepr<T: Scalar> {
    start_time: T,
    epochs: Vec<EpochRepr<T>>,
}

impl<T: Scalar + Serialize> Serialize for EpochSequence<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = SequenceRepr {
            start_time: self.start_time,
            epochs: self
                .epochs
                .iter()
                .map(|e| EpochRepr {
                    dwell: e.dwell,
                    topology: e.topology.clone(),
                })
                .collect(),
        };
        repr.serialize(serializer)
    }
}

impl<'de, T: Scalar + serde::de::DeserializeOwned> Deserialize<'de> for EpochSequence<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = SequenceRepr::<T>::deserialize(deserializer)?;
        EpochSequence::new(
            repr.start_time,
            repr.epochs
                .into_iter()
                .map(|e| (e.topology, e.dwell))
                .collect(),
        )
        .map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_node() -> Topology<f64> {
        Topology::new(2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap()
    }

    #[test]
    fn laplacian_two_node_single_leader() {
        let topo = two_node();
        let l = build_laplacian(&topo, &[1]).unwrap();
        assert_eq!(l, ndarray::array![[1.0, -1.0], [0.0, 0.0]]);
    }

    #[test]
    fn laplacian_all_leaders_is_zero() {
        let topo = two_node();
        let l = build_laplacian(&topo, &[0, 1]).unwrap();
        assert_eq!(l, Matrix::<f64>::zeros((2, 2)));
    }

    #[test]
    fn laplacian_three_cycle_no_leaders() {
        let topo =
            Topology::new(3, vec![(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap();
        let l = build_laplacian(&topo, &[]).unwrap();
        assert_eq!(
            l,
            ndarray::array![[1.0, -1.0, 0.0], [0.0, 1.0, -1.0], [-1.0, 0.0, 1.0]]
        );
    }

    #[test]
    fn laplacian_rejects_out_of_range_leader() {
        let topo = two_node();
        assert!(matches!(
            build_laplacian(&topo, &[2]),
            Err(Error::NodeOutOfRange { node: 2, n: 2 })
        ));
    }

    #[test]
    fn topology_rejects_negative_weight_and_self_loop() {
        assert!(matches!(
            Topology::new(2, vec![(0, 1, -1.0)]),
            Err(Error::NegativeWeight { .. })
        ));
        assert!(matches!(
            Topology::new(2, vec![(0, 0, 1.0)]),
            Err(Error::SelfLoop(0))
        ));
    }

    #[test]
    fn strong_connectivity_two_node() {
        assert!(two_node().is_strongly_connected());
        let one_way = Topology::new(2, vec![(0, 1, 1.0)]).unwrap();
        assert!(!one_way.is_strongly_connected());
    }

    #[test]
    fn geometric_small_area_is_complete() {
        let params = GeometricParams {
            n: 2,
            area_side: 10.0,
            comm_range: 20.0,
            weight_range: (0.0, 1.0),
            symmetric_weights: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let topo = gen_geometric::<f64>(&params, &mut rng).unwrap();
        assert_eq!(topo.edge_count(), 2);
        assert!(topo.weight(0, 1).is_some() && topo.weight(1, 0).is_some());
    }

    #[test]
    fn geometric_zero_range_fails() {
        let params = GeometricParams {
            n: 3,
            area_side: 10.0,
            comm_range: 1e-12,
            weight_range: (0.0, 1.0),
            symmetric_weights: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            gen_geometric::<f64>(&params, &mut rng),
            Err(Error::GenerationFailed { attempts }) if attempts == GENERATION_RETRY_LIMIT
        ));
    }

    #[test]
    fn geometric_is_seed_deterministic() {
        let params = GeometricParams {
            n: 30,
            area_side: 1000.0,
            comm_range: 400.0,
            weight_range: (0.0, 50.0),
            symmetric_weights: false,
        };
        let a = gen_geometric::<f64>(&params, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = gen_geometric::<f64>(&params, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn link_failures_zero_prob_preserves_base() {
        let params = GeometricParams {
            n: 12,
            area_side: 100.0,
            comm_range: 60.0,
            weight_range: (0.0, 5.0),
            symmetric_weights: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = gen_geometric::<f64>(&params, &mut rng).unwrap();
        let seq = gen_link_failures(&base, 0.0, 4, 1.0, &mut rng).unwrap();
        assert_eq!(seq.len(), 4);
        for epoch in seq.epochs() {
            assert_eq!(epoch.topology, base);
        }
    }

    #[test]
    fn link_failures_single_epoch() {
        let base = two_node();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seq = gen_link_failures(&base, 0.5, 1, 2.0, &mut rng).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.min_dwell(), 2.0);
    }

    #[test]
    fn link_failure_rate_matches_probability() {
        let params = GeometricParams {
            n: 20,
            area_side: 100.0,
            comm_range: 50.0,
            weight_range: (1.0, 2.0),
            symmetric_weights: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base = gen_geometric::<f64>(&params, &mut rng).unwrap();
        let links = base.undirected_links().len();
        let epochs = 400;
        let seq = gen_link_failures(&base, 0.15, epochs, 1.0, &mut rng).unwrap();
        let mut survived = 0usize;
        for epoch in seq.epochs() {
            survived += epoch.topology.undirected_links().len();
        }
        let total = links * epochs;
        let rate = survived as f64 / total as f64;
        let se = (0.85f64 * 0.15 / total as f64).sqrt();
        assert!(
            (rate - 0.85).abs() <= 3.0 * se,
            "survival rate {rate} outside 0.85 +/- 3se ({se})"
        );
    }

    #[test]
    fn waypoint_static_configuration_repeats_topology() {
        let params = WaypointParams {
            geometric: GeometricParams {
                n: 10,
                area_side: 100.0,
                comm_range: 50.0,
                weight_range: (0.0, 5.0),
                symmetric_weights: false,
            },
            ref_speed: 0.0,
            disturbance_range: (0.0, 0.0),
            epochs: 5,
            dwell: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let seq = gen_waypoint::<f64>(&params, &mut rng).unwrap();
        let first = &seq.epochs()[0].topology;
        for epoch in seq.epochs() {
            assert_eq!(&epoch.topology, first);
        }
    }

    #[test]
    fn waypoint_is_seed_deterministic() {
        let params = WaypointParams {
            geometric: GeometricParams {
                n: 15,
                area_side: 500.0,
                comm_range: 200.0,
                weight_range: (0.0, 10.0),
                symmetric_weights: false,
            },
            ref_speed: 50.0,
            disturbance_range: (0.0, 20.0),
            epochs: 6,
            dwell: 0.5,
        };
        let a = gen_waypoint::<f64>(&params, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = gen_waypoint::<f64>(&params, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn waypoint_two_node_full_range_is_complete() {
        let params = WaypointParams {
            geometric: GeometricParams {
                n: 2,
                area_side: 10.0,
                comm_range: 100.0,
                weight_range: (1.0, 2.0),
                symmetric_weights: false,
            },
            ref_speed: 3.0,
            disturbance_range: (0.0, 1.0),
            epochs: 4,
            dwell: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let seq = gen_waypoint::<f64>(&params, &mut rng).unwrap();
        for epoch in seq.epochs() {
            assert_eq!(epoch.topology.edge_count(), 2);
        }
    }

    #[test]
    fn waypoint_epochs_overlap_partially() {
        // Average edge-set overlap between consecutive epochs stays strictly
        // inside (0, 1) under mobility.
        let params = WaypointParams {
            geometric: GeometricParams {
                n: 40,
                area_side: 1000.0,
                comm_range: 300.0,
                weight_range: (0.0, 50.0),
                symmetric_weights: false,
            },
            ref_speed: 100.0,
            disturbance_range: (0.0, 50.0),
            epochs: 8,
            dwell: 1.0,
        };
        let mut sum = 0.0;
        let mut count = 0usize;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let seq = gen_waypoint::<f64>(&params, &mut rng).unwrap();
            for pair in seq.epochs().windows(2) {
                let a = pair[0].topology.undirected_links();
                let b = pair[1].topology.undirected_links();
                let inter = a.intersection(&b).count();
                let union = a.union(&b).count();
                if union > 0 {
                    sum += inter as f64 / union as f64;
                    count += 1;
                }
            }
        }
        let mean = sum / count as f64;
        assert!(mean > 0.0 && mean < 1.0, "mean overlap {mean}");
    }

    #[test]
    fn leader_config_validation() {
        assert!(LeaderConfig::new(vec![0, 1], vec![1.0]).is_err());
        assert!(matches!(
            LeaderConfig::new(vec![0, 0], vec![1.0, 2.0]),
            Err(Error::DuplicateLeader(0))
        ));
        let cfg = LeaderConfig::new(vec![2, 0], vec![3.0, -1.0]).unwrap();
        assert_eq!(cfg.hull().unwrap(), (-1.0, 3.0));
        assert!(LeaderConfig::<f64>::new(vec![], vec![]).unwrap().hull().is_err());
    }

    #[test]
    fn epoch_sequence_validation() {
        let topo = two_node();
        assert!(matches!(
            EpochSequence::<f64>::new(0.0, vec![]),
            Err(Error::EmptySequence)
        ));
        assert!(matches!(
            EpochSequence::new(0.0, vec![(topo.clone(), 0.0)]),
            Err(Error::InvalidDwell(_))
        ));
        let seq = EpochSequence::new(0.0, vec![(topo.clone(), 1.0), (topo, 0.5)]).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.min_dwell(), 0.5);
        assert_eq!(seq.total_duration(), 1.5);
    }

    #[test]
    fn topology_json_round_trip_is_one_based() {
        let topo = two_node();
        let json = serde_json::to_string(&topo).unwrap();
        assert!(json.contains("\"from\":1"));
        let back: Topology<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, topo);
    }

    #[test]
    fn sequence_json_round_trip() {
        let topo = two_node();
        let seq = EpochSequence::new(0.0, vec![(topo.clone(), 1.0), (topo, 2.0)]).unwrap();
        let json = serde_json::to_string(&seq).unwrap();
        let back: EpochSequence<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn bad_connectivity_flag_is_rejected() {
        let json = r#"{"n":2,"strongly_connected":true,"edges":[{"from":1,"to":2,"weight":1.0}]}"#;
        assert!(serde_json::from_str::<Topology<f64>>(json).is_err());
    }
}
