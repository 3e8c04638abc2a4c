//! Link-quality bookkeeping and the link suitability score.
//!
//! The suitability of forwarding from `A` to neighbor `B` is
//! `PPS_B + APPR(N_B) + interference term + E_r(B)/E_i(B)`, and the merit of
//! a path is the sum of the suitabilities of its links. Two interpretation
//! knobs exist:
//!
//! - [`ApprMode`]: `Mean` averages the neighbors' receive probabilities,
//!   `Literal` sums them.
//! - [`InterferenceMode`]: `Normalized` uses `1/(1+I)`, `Literal` uses `1/I`.
//!
//! `I` is an interference-to-signal ratio, so a smaller value means a cleaner
//! link. See [`InterferenceModel`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{NodeId, Position};

#[derive(Debug, Error, PartialEq)]
pub enum LinkError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("{to} is not a neighbor of {from}")]
    UnknownLink { from: NodeId, to: NodeId },
    #[error("no candidate next hops")]
    NoCandidates,
    #[error("invalid path: {0}")]
    InvalidPath(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApprMode {
    Mean,
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterferenceMode {
    Normalized,
    Literal,
}

/// Knobs shared by every suitability evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricParams {
    pub appr_mode: ApprMode,
    pub interference_mode: InterferenceMode,
    /// Probability reported for a counter pair with no observations.
    pub cold_start: f64,
    /// Per-observation exponential decay of the ratio estimators; 1.0 keeps
    /// plain cumulative counts.
    pub decay: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            appr_mode: ApprMode::Mean,
            interference_mode: InterferenceMode::Normalized,
            cold_start: 1.0,
            decay: 1.0,
        }
    }
}

/// `I = (noise + per_neighbor * contenders) * d^exponent / reference`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceModel {
    pub noise: f64,
    pub per_neighbor: f64,
    pub exponent: f64,
    pub reference: f64,
}

impl Default for InterferenceModel {
    fn default() -> Self {
        InterferenceModel {
            noise: 1.0,
            per_neighbor: 0.25,
            exponent: 2.0,
            reference: 3200.0,
        }
    }
}

impl InterferenceModel {
    pub fn ratio(&self, distance: f64, contenders: usize) -> f64 {
        // floor keeps 1/I finite for co-located nodes
        let d = distance.max(1e-3);
        (self.noise + self.per_neighbor * contenders as f64) * d.powf(self.exponent)
            / self.reference
    }
}

/// Success ratio with optional exponential forgetting.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct DecayedRatio {
    successes: f64,
    trials: f64,
}

impl DecayedRatio {
    fn trial(&mut self, decay: f64) {
        self.trials = self.trials * decay + 1.0;
        self.successes *= decay;
    }

    fn success(&mut self) {
        self.successes += 1.0;
    }

    fn ratio(&self, cold_start: f64) -> f64 {
        if self.trials <= 0.0 {
            cold_start
        } else {
            (self.successes / self.trials).clamp(0.0, 1.0)
        }
    }
}

/// Send and receive counters plus the last interference estimate.
///
/// Used both per directed link and aggregated per node: a node's send
/// counters cover all of its outgoing links, its receive counters all of
/// its incoming ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkStats {
    pub sends_attempted: u64,
    pub sends_succeeded: u64,
    pub receives_expected: u64,
    pub receives_succeeded: u64,
    pub interference: f64,
    send: DecayedRatio,
    recv: DecayedRatio,
}

impl Default for LinkStats {
    fn default() -> Self {
        LinkStats {
            sends_attempted: 0,
            sends_succeeded: 0,
            receives_expected: 0,
            receives_succeeded: 0,
            interference: 1.0,
            send: DecayedRatio::default(),
            recv: DecayedRatio::default(),
        }
    }
}

impl LinkStats {
    /// Counter state without decay; mostly useful in tests.
    pub fn from_counts(sends: (u64, u64), receives: (u64, u64), interference: f64) -> Self {
        let (sa, ss) = sends;
        let (re, rs) = receives;
        LinkStats {
            sends_attempted: sa,
            sends_succeeded: ss,
            receives_expected: re,
            receives_succeeded: rs,
            interference,
            send: DecayedRatio {
                successes: ss as f64,
                trials: sa as f64,
            },
            recv: DecayedRatio {
                successes: rs as f64,
                trials: re as f64,
            },
        }
    }

    pub fn record_send_attempt(&mut self, decay: f64) {
        self.sends_attempted += 1;
        self.send.trial(decay);
    }

    pub fn record_send_success(&mut self) {
        self.sends_succeeded += 1;
        self.send.success();
    }

    pub fn record_receive_expected(&mut self, decay: f64) {
        self.receives_expected += 1;
        self.recv.trial(decay);
    }

    pub fn record_receive_success(&mut self) {
        self.receives_succeeded += 1;
        self.recv.success();
    }

    pub fn pps(&self, cold_start: f64) -> f64 {
        self.send.ratio(cold_start)
    }

    pub fn ppr(&self, cold_start: f64) -> f64 {
        self.recv.ratio(cold_start)
    }
}

/// Probability of packet sending: successful sends over attempts.
pub fn pps(stats: &LinkStats) -> f64 {
    stats.pps(1.0)
}

/// Probability of packet receiving, the receive-side mirror of [`pps`].
pub fn ppr(stats: &LinkStats) -> f64 {
    stats.ppr(1.0)
}

/// Counters for every directed link and every node.
#[derive(Debug, Clone)]
pub struct LinkStatsTable {
    links: BTreeMap<(NodeId, NodeId), LinkStats>,
    nodes: Vec<LinkStats>,
    decay: f64,
}

impl LinkStatsTable {
    pub fn new(node_count: usize, decay: f64) -> Self {
        LinkStatsTable {
            links: BTreeMap::new(),
            nodes: vec![LinkStats::default(); node_count],
            decay,
        }
    }

    pub fn link(&self, from: NodeId, to: NodeId) -> Option<&LinkStats> {
        self.links.get(&(from, to))
    }

    pub fn links(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &LinkStats)> {
        self.links.iter()
    }

    pub fn node(&self, id: NodeId) -> &LinkStats {
        &self.nodes[id.index()]
    }

    pub fn set_interference(&mut self, from: NodeId, to: NodeId, value: f64) {
        self.links.entry((from, to)).or_default().interference = value;
    }

    /// A transmission from `from` to `to` started.
    pub fn record_attempt(&mut self, from: NodeId, to: NodeId) {
        let d = self.decay;
        let link = self.links.entry((from, to)).or_default();
        link.record_send_attempt(d);
        link.record_receive_expected(d);
        self.nodes[from.index()].record_send_attempt(d);
        self.nodes[to.index()].record_receive_expected(d);
    }

    /// The transmission from `from` to `to` got through.
    pub fn record_success(&mut self, from: NodeId, to: NodeId) {
        let link = self.links.entry((from, to)).or_default();
        link.record_send_success();
        link.record_receive_success();
        self.nodes[from.index()].record_send_success();
        self.nodes[to.index()].record_receive_success();
    }
}

/// What node `A` knows about one neighbor `B` after the beacon phase.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborEntry {
    pub id: NodeId,
    pub position: Position,
    pub residual_energy: f64,
    pub initial_energy: f64,
    /// B's probability of packet sending.
    pub pps: f64,
    /// Interference ratio of the link A -> B.
    pub interference: f64,
    /// B's neighbors and their probability of packet receiving.
    pub neighbor_ppr: Vec<(NodeId, f64)>,
    /// Whether A reaches B only through extended range.
    pub extended: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborTable {
    pub owner: Option<NodeId>,
    pub entries: BTreeMap<NodeId, NeighborEntry>,
}

impl NeighborTable {
    pub fn entry(&self, neighbor: NodeId) -> Result<&NeighborEntry, LinkError> {
        self.entries.get(&neighbor).ok_or(LinkError::UnknownLink {
            from: self.owner.unwrap_or(NodeId(u32::MAX)),
            to: neighbor,
        })
    }

    pub fn appr(&self, neighbor: NodeId, mode: ApprMode) -> Result<f64, LinkError> {
        self.entries
            .get(&neighbor)
            .map(|e| appr(e, mode))
            .ok_or(LinkError::UnknownNode(neighbor))
    }
}

/// Every node's neighbor table, indexed by node id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborTables {
    tables: Vec<NeighborTable>,
}

impl NeighborTables {
    pub fn new(tables: Vec<NeighborTable>) -> Self {
        NeighborTables { tables }
    }

    pub fn table(&self, id: NodeId) -> Result<&NeighborTable, LinkError> {
        self.tables
            .get(id.index())
            .ok_or(LinkError::UnknownNode(id))
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }
}

/// Average (or, in literal mode, summed) receive probability over the
/// neighbor's own neighborhood.
pub fn appr(entry: &NeighborEntry, mode: ApprMode) -> f64 {
    let sum: f64 = entry.neighbor_ppr.iter().map(|&(_, p)| p).sum();
    match mode {
        ApprMode::Literal => sum,
        ApprMode::Mean if entry.neighbor_ppr.is_empty() => 1.0,
        ApprMode::Mean => sum / entry.neighbor_ppr.len() as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuitabilityScore {
    pub pps_term: f64,
    pub appr_term: f64,
    pub interference_term: f64,
    pub energy_term: f64,
    pub total: f64,
}

impl SuitabilityScore {
    pub fn new(pps_term: f64, appr_term: f64, interference_term: f64, energy_term: f64) -> Self {
        SuitabilityScore {
            pps_term,
            appr_term,
            interference_term,
            energy_term,
            total: pps_term + appr_term + interference_term + energy_term,
        }
    }

    /// Multiplies every term by `factor` and recomputes the total.
    pub fn scaled(&self, factor: f64) -> Self {
        SuitabilityScore::new(
            self.pps_term * factor,
            self.appr_term * factor,
            self.interference_term * factor,
            self.energy_term * factor,
        )
    }
}

pub fn interference_term(interference: f64, mode: InterferenceMode) -> f64 {
    match mode {
        InterferenceMode::Normalized => 1.0 / (1.0 + interference),
        InterferenceMode::Literal => 1.0 / interference,
    }
}

/// Suitability of the link from the table's owner to `neighbor`.
pub fn suitability(
    table: &NeighborTable,
    neighbor: NodeId,
    params: &MetricParams,
) -> Result<SuitabilityScore, LinkError> {
    let e = table.entry(neighbor)?;
    Ok(score_entry(e, params))
}

pub fn score_entry(e: &NeighborEntry, params: &MetricParams) -> SuitabilityScore {
    SuitabilityScore::new(
        e.pps,
        appr(e, params.appr_mode),
        interference_term(e.interference, params.interference_mode),
        e.residual_energy / e.initial_energy,
    )
}

/// Highest total wins; equal totals go to the lowest id.
pub fn argmax_by_score(scored: &[(NodeId, SuitabilityScore)]) -> Option<NodeId> {
    scored
        .iter()
        .max_by(|(ia, a), (ib, b)| a.total.total_cmp(&b.total).then(ib.cmp(ia)))
        .map(|(id, _)| *id)
}

/// Picks the candidate with the best suitability from the table's owner.
pub fn select_next_hop(
    table: &NeighborTable,
    candidates: &[NodeId],
    params: &MetricParams,
) -> Result<NodeId, LinkError> {
    if candidates.is_empty() {
        return Err(LinkError::NoCandidates);
    }
    let scored = candidates
        .iter()
        .map(|&c| suitability(table, c, params).map(|s| (c, s)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(argmax_by_score(&scored).expect("non-empty"))
}

/// An ordered, loop-free node sequence from source to sink.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutePath {
    pub node_ids: Vec<NodeId>,
    pub hop_count: usize,
    pub total_merit: f64,
    /// Indices `i` for which the hop `node_ids[i] -> node_ids[i+1]` uses extended range.
    pub extended_hops: Vec<usize>,
}

impl RoutePath {
    pub fn new(node_ids: Vec<NodeId>) -> Result<Self, LinkError> {
        if node_ids.len() < 2 {
            return Err(LinkError::InvalidPath(format!(
                "a path needs at least two nodes, got {}",
                node_ids.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for id in &node_ids {
            if !seen.insert(*id) {
                return Err(LinkError::InvalidPath(format!("node {id} repeats")));
            }
        }
        Ok(RoutePath {
            hop_count: node_ids.len() - 1,
            node_ids,
            total_merit: 0.0,
            extended_hops: Vec::new(),
        })
    }

    pub fn first(&self) -> NodeId {
        self.node_ids[0]
    }

    pub fn last(&self) -> NodeId {
        *self.node_ids.last().expect("validated non-empty")
    }

    pub fn interior(&self) -> &[NodeId] {
        &self.node_ids[1..self.node_ids.len() - 1]
    }

    pub fn links(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.node_ids.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Sum of link suitabilities along the path.
pub fn total_merit(
    path: &RoutePath,
    tables: &NeighborTables,
    params: &MetricParams,
) -> Result<f64, LinkError> {
    let mut total = 0.0;
    for (a, b) in path.links() {
        total += suitability(tables.table(a)?, b, params)?.total;
    }
    Ok(total)
}
