//! Deployment field, node geometry and radio neighborhoods.
//!
//! Node ids are dense: `0` is the sink, `1` is the source, and `2..` are the
//! randomly placed sensors. Positions are drawn from the
//! [`StreamTag::Placement`](crate::rng::StreamTag) ChaCha8 stream, x before y,
//! each as `u * extent` with `u` uniform in `[0, 1)`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::energy::CompensatedSum;
use crate::rng::{self, StreamTag};

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("invalid topology config: {0}")]
    InvalidConfig(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const SINK: NodeId = NodeId(0);
    pub const SOURCE: NodeId = NodeId(1);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// A point in the field, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        distance(*self, *other)
    }
}

/// Euclidean distance in meters.
pub fn distance(a: Position, b: Position) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// What a node does when its radio range alone is not enough.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FallbackMode {
    /// Strict closed-ball neighborhoods.
    Off,
    /// A node with no in-range neighbor reaches its single nearest alive node.
    Isolated,
    /// A node with no in-range neighbor closer to the sink additionally
    /// reaches the nearest alive node that is closer to the sink. Isolated
    /// nodes are covered by the same rule.
    Progress,
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeId,
    pub position: Position,
    initial_energy: f64,
    consumed: CompensatedSum,
    alive: bool,
}

impl NodeState {
    pub fn new(id: NodeId, position: Position, initial_energy: f64) -> Self {
        NodeState {
            id,
            position,
            initial_energy,
            consumed: CompensatedSum::default(),
            alive: initial_energy > 0.0,
        }
    }

    pub fn initial_energy(&self) -> f64 {
        self.initial_energy
    }

    /// Every joule debited so far, including any overdraw on the final debit.
    pub fn consumed_energy(&self) -> f64 {
        self.consumed.value()
    }

    /// Residual energy in joules, never negative.
    pub fn residual_energy(&self) -> f64 {
        if !self.alive {
            return 0.0;
        }
        (self.initial_energy - self.consumed.value()).max(0.0)
    }

    pub fn is_alive(&self) -> bool {
        self.alive
    }

    /// Draws `joules` from the battery. Returns `true` when the draw
    /// exhausted the node (the draw itself still counts as performed).
    pub(crate) fn draw(&mut self, joules: f64) -> bool {
        self.consumed.add(joules);
        if self.consumed.value() >= self.initial_energy {
            self.alive = false;
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<NodeState>,
    sink: NodeId,
    source: NodeId,
    width: f64,
    height: f64,
    radio_range: f64,
    fallback: FallbackMode,
}

/// Places `config.node_count` nodes: sink and source pinned, the rest uniform
/// in the field. Deterministic in `seed`.
pub fn place_nodes(config: &ScenarioConfig, seed: u64) -> Result<Topology, TopologyError> {
    if config.node_count < 2 {
        return Err(TopologyError::InvalidConfig(format!(
            "node_count must be at least 2, got {}",
            config.node_count
        )));
    }
    let (w, h) = (config.field_width_m, config.field_height_m);
    let mut rng = rng::stream(seed, StreamTag::Placement);
    let mut positions = Vec::with_capacity(config.node_count);
    positions.push(Position::new(config.sink_x_m, config.sink_y_m));
    positions.push(Position::new(config.source_x_m, config.source_y_m));
    for _ in 2..config.node_count {
        let x = rng.random::<f64>() * w;
        let y = rng.random::<f64>() * h;
        positions.push(Position::new(x, y));
    }
    Topology::from_positions(
        w,
        h,
        config.radio_range_m,
        config.initial_energy_j,
        positions,
    )
    .map(|t| t.with_fallback(config.fallback))
}

impl Topology {
    /// Builds a topology from explicit positions; index 0 is the sink and
    /// index 1 the source. Fallback starts as [`FallbackMode::Isolated`].
    pub fn from_positions(
        width: f64,
        height: f64,
        radio_range: f64,
        initial_energy: f64,
        positions: Vec<Position>,
    ) -> Result<Self, TopologyError> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(TopologyError::InvalidConfig(format!(
                "field dimensions must be positive, got {width} x {height}"
            )));
        }
        if radio_range.is_nan() || radio_range <= 0.0 {
            return Err(TopologyError::InvalidConfig(format!(
                "radio range must be positive, got {radio_range}"
            )));
        }
        if initial_energy.is_nan() || initial_energy <= 0.0 {
            return Err(TopologyError::InvalidConfig(format!(
                "initial energy must be positive, got {initial_energy}"
            )));
        }
        if positions.len() < 2 {
            return Err(TopologyError::InvalidConfig(format!(
                "need at least sink and source, got {} nodes",
                positions.len()
            )));
        }
        for (i, p) in positions.iter().enumerate() {
            if !(0.0..=width).contains(&p.x) || !(0.0..=height).contains(&p.y) {
                return Err(TopologyError::InvalidConfig(format!(
                    "node {i} at ({}, {}) lies outside the {width} x {height} field",
                    p.x, p.y
                )));
            }
        }
        let nodes = positions
            .into_iter()
            .enumerate()
            .map(|(i, p)| NodeState::new(NodeId(i as u32), p, initial_energy))
            .collect();
        Ok(Topology {
            nodes,
            sink: NodeId::SINK,
            source: NodeId::SOURCE,
            width,
            height,
            radio_range,
            fallback: FallbackMode::Isolated,
        })
    }

    pub fn with_fallback(mut self, fallback: FallbackMode) -> Self {
        self.fallback = fallback;
        self
    }

    pub fn sink(&self) -> NodeId {
        self.sink
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn dimensions(&self) -> (f64, f64) {
        (self.width, self.height)
    }

    pub fn radio_range(&self) -> f64 {
        self.radio_range
    }

    pub fn fallback(&self) -> FallbackMode {
        self.fallback
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn node(&self, id: NodeId) -> Result<&NodeState, TopologyError> {
        self.nodes
            .get(id.index())
            .ok_or(TopologyError::UnknownNode(id))
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> Result<&mut NodeState, TopologyError> {
        self.nodes
            .get_mut(id.index())
            .ok_or(TopologyError::UnknownNode(id))
    }

    pub fn position(&self, id: NodeId) -> Result<Position, TopologyError> {
        self.node(id).map(|n| n.position)
    }

    pub fn distance_between(&self, a: NodeId, b: NodeId) -> Result<f64, TopologyError> {
        Ok(distance(self.position(a)?, self.position(b)?))
    }

    /// True when the hop `a -> b` exceeds the nominal radio range.
    pub fn is_extended(&self, a: NodeId, b: NodeId) -> Result<bool, TopologyError> {
        Ok(self.distance_between(a, b)? > self.radio_range)
    }

    /// Alive nodes inside the closed radio ball around `id`, ascending by id.
    pub fn in_range(&self, id: NodeId) -> Result<Vec<NodeId>, TopologyError> {
        let me = self.node(id)?;
        Ok(self
            .nodes
            .iter()
            .filter(|n| {
                n.id != id && n.alive && distance(me.position, n.position) <= self.radio_range
            })
            .map(|n| n.id)
            .collect())
    }

    /// Radio neighbors of `id`, ascending by id, including the extended-range
    /// fallback link when the fallback mode calls for one.
    pub fn neighbors(&self, id: NodeId) -> Result<Vec<NodeId>, TopologyError> {
        let mut out = self.in_range(id)?;
        let me = self.node(id)?.position;
        match self.fallback {
            FallbackMode::Off => {}
            FallbackMode::Isolated => {
                if out.is_empty() {
                    out.extend(self.nearest_where(id, |_| true));
                }
            }
            FallbackMode::Progress => {
                if id != self.sink {
                    let sink = self.position(self.sink)?;
                    let mine = distance(me, sink);
                    let closer = |n: &NodeState| distance(n.position, sink) < mine;
                    let has_progress = out.iter().any(|&n| closer(&self.nodes[n.index()]));
                    if !has_progress {
                        if let Some(n) = self.nearest_where(id, closer) {
                            out.push(n);
                            out.sort_unstable();
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn nearest_where(&self, id: NodeId, pred: impl Fn(&NodeState) -> bool) -> Option<NodeId> {
        let me = self.nodes[id.index()].position;
        self.nodes
            .iter()
            .filter(|n| n.id != id && n.alive && pred(n))
            .min_by(|a, b| {
                distance(me, a.position)
                    .total_cmp(&distance(me, b.position))
                    .then(a.id.cmp(&b.id))
            })
            .map(|n| n.id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(positions: &[(f64, f64)], range: f64) -> Topology {
        let ps = positions
            .iter()
            .map(|&(x, y)| Position::new(x, y))
            .collect();
        Topology::from_positions(100.0, 100.0, range, 2.0, ps).unwrap()
    }

    #[test]
    fn distance_examples() {
        let o = Position::new(0.0, 0.0);
        assert_eq!(distance(o, o), 0.0);
        assert_eq!(distance(o, Position::new(3.0, 4.0)), 5.0);
        let d = distance(Position::new(300.0, 300.0), o);
        assert!((d - 424.264_068_711_928_5).abs() < 1e-9);
    }

    #[test]
    fn range_boundary_is_inclusive() {
        // node 0 at origin, others at 10, 39.9 and exactly 40 m
        let t = field(&[(0.0, 0.0), (10.0, 0.0), (0.0, 39.9), (40.0, 0.0)], 40.0);
        assert_eq!(
            t.neighbors(NodeId(0)).unwrap(),
            vec![NodeId(1), NodeId(2), NodeId(3)]
        );
    }

    #[test]
    fn isolated_node_fallback() {
        let t = field(&[(0.0, 0.0), (90.0, 90.0), (60.0, 0.0), (0.0, 70.0)], 40.0);
        assert_eq!(t.neighbors(NodeId(0)).unwrap(), vec![NodeId(2)]);
        let off = t.clone().with_fallback(FallbackMode::Off);
        assert!(off.neighbors(NodeId(0)).unwrap().is_empty());
    }

    #[test]
    fn progress_fallback_points_toward_sink() {
        // node 1 has an in-range neighbor (3) but it is farther from the sink
        let t = field(
            &[(0.0, 0.0), (50.0, 50.0), (20.0, 20.0), (70.0, 70.0)],
            35.0,
        )
        .with_fallback(FallbackMode::Progress);
        let n = t.neighbors(NodeId(1)).unwrap();
        assert!(n.contains(&NodeId(3)));
        assert!(n.contains(&NodeId(2)), "{n:?}");
        assert!(t.is_extended(NodeId(1), NodeId(2)).unwrap());
        // sink never gets a fallback link
        assert_eq!(t.neighbors(NodeId(0)).unwrap(), vec![NodeId(2)]);
    }

    #[test]
    fn dead_nodes_leave_neighborhoods() {
        let mut t = field(&[(0.0, 0.0), (10.0, 0.0), (20.0, 0.0)], 40.0);
        t.node_mut(NodeId(1)).unwrap().draw(5.0);
        assert!(!t.node(NodeId(1)).unwrap().is_alive());
        assert_eq!(t.neighbors(NodeId(0)).unwrap(), vec![NodeId(2)]);
    }

    #[test]
    fn unknown_node_is_an_error() {
        let t = field(&[(0.0, 0.0), (10.0, 0.0)], 40.0);
        assert_eq!(
            t.neighbors(NodeId(9)),
            Err(TopologyError::UnknownNode(NodeId(9)))
        );
    }

    #[test]
    fn placement_examples() {
        let cfg = ScenarioConfig::default();
        let t = place_nodes(&cfg, 42).unwrap();
        assert_eq!(t.len(), 100);
        assert_eq!(t.position(t.sink()).unwrap(), Position::new(0.0, 0.0));
        assert_eq!(t.position(t.source()).unwrap(), Position::new(300.0, 300.0));
        for n in t.nodes() {
            assert!((0.0..=400.0).contains(&n.position.x));
            assert!((0.0..=400.0).contains(&n.position.y));
        }
        let again = place_nodes(&cfg, 42).unwrap();
        for (a, b) in t.nodes().iter().zip(again.nodes()) {
            assert_eq!(a.position.x.to_bits(), b.position.x.to_bits());
            assert_eq!(a.position.y.to_bits(), b.position.y.to_bits());
        }
        let other = place_nodes(&cfg, 43).unwrap();
        assert_ne!(
            t.position(NodeId(2)).unwrap(),
            other.position(NodeId(2)).unwrap()
        );

        let minimal = ScenarioConfig {
            node_count: 2,
            ..ScenarioConfig::default()
        };
        let t = place_nodes(&minimal, 7).unwrap();
        assert_eq!(
            t.node_ids().collect::<Vec<_>>(),
            vec![NodeId::SINK, NodeId::SOURCE]
        );
    }

    #[test]
    fn placement_rejects_bad_config() {
        let cfg = ScenarioConfig {
            node_count: 1,
            ..ScenarioConfig::default()
        };
        assert!(matches!(
            place_nodes(&cfg, 1),
            Err(TopologyError::InvalidConfig(_))
        ));
        let cfg = ScenarioConfig {
            field_width_m: 0.0,
            ..ScenarioConfig::default()
        };
        assert!(matches!(
            place_nodes(&cfg, 1),
            Err(TopologyError::InvalidConfig(_))
        ));
    }
}
