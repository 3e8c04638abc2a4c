//! Neighbor discovery and multi-path construction.
//!
//! [`beacon_exchange`] fills every node's neighbor table. [`discover_paths`]
//! then builds node-disjoint paths one at a time by greedy next-hop
//! selection on the link suitability, and [`minhop_paths`] provides the
//! min-hop baseline by repeated breadth-first search.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{EnergyError, EnergyLedger, EnergyLedgerEntry, RadioParams};
use crate::engine::mac::MacModel;
use crate::link_metrics::{
    select_next_hop, total_merit, InterferenceModel, LinkError, LinkStatsTable, MetricParams,
    NeighborEntry, NeighborTable, NeighborTables, RoutePath,
};
use crate::rng::{keyed_uniform, StreamTag};
use crate::topology::{distance, NodeId, Position, Topology, TopologyError};

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error("no path from {from} to {sink}")]
    NoPath { from: NodeId, sink: NodeId },
    #[error("invalid routing arguments: {0}")]
    InvalidArgs(String),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// Control packet announcing a node's state to its neighborhood.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Beacon {
    pub origin: NodeId,
    pub position: Position,
    pub residual_energy: f64,
    pub pps: f64,
    pub ppr: f64,
    pub bits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeaconSettings {
    pub bits: u64,
    /// Debit beacon transmissions and receptions.
    pub accounting: bool,
    pub rounds: u32,
}

impl Default for BeaconSettings {
    fn default() -> Self {
        BeaconSettings {
            bits: 32 * 8,
            accounting: true,
            rounds: 4,
        }
    }
}

/// Models that shape link outcomes and scores.
#[derive(Debug, Clone, Copy)]
pub struct LinkEnv<'a> {
    pub radio: &'a RadioParams,
    pub mac: &'a MacModel,
    pub interference: &'a InterferenceModel,
    pub metric: &'a MetricParams,
    pub seed: u64,
}

/// Runs `settings.rounds` beacon rounds and returns the resulting neighbor
/// tables.
///
/// Each alive node broadcasts once per round. The broadcast reaches every
/// node that lists it as a neighbor or that it lists as a neighbor, at a
/// power covering the farthest of them (and at least the nominal range).
/// Each reception is a Bernoulli trial that feeds the link counters.
pub fn beacon_exchange(
    topo: &mut Topology,
    stats: &mut LinkStatsTable,
    ledger: &mut EnergyLedger,
    settings: &BeaconSettings,
    env: &LinkEnv<'_>,
) -> Result<NeighborTables, RoutingError> {
    if settings.bits == 0 {
        return Err(RoutingError::InvalidArgs(
            "beacon size must be positive".into(),
        ));
    }
    let range = topo.radio_range();
    for round in 0..settings.rounds {
        let adjacency = adjacency(topo)?;
        let mut audience: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); topo.len()];
        for (a, outs) in adjacency.iter().enumerate() {
            for &b in outs {
                audience[a].insert(b);
                audience[b.index()].insert(NodeId(a as u32));
            }
        }
        for a in topo.node_ids().collect::<Vec<_>>() {
            if !topo.node(a)?.is_alive() {
                continue;
            }
            let beacon = Beacon {
                origin: a,
                position: topo.position(a)?,
                residual_energy: topo.node(a)?.residual_energy(),
                pps: stats.node(a).pps(env.metric.cold_start),
                ppr: stats.node(a).ppr(env.metric.cold_start),
                bits: settings.bits,
            };
            let listeners: Vec<NodeId> = audience[a.index()]
                .iter()
                .copied()
                .filter(|b| topo.node(*b).map(|n| n.is_alive()).unwrap_or(false))
                .collect();
            let reach = listeners
                .iter()
                .map(|&b| distance(beacon.position, topo.nodes()[b.index()].position))
                .fold(range, f64::max);
            if settings.accounting {
                let e = EnergyLedgerEntry::transmit(a, beacon.bits, reach, 0.0, env.radio)?;
                ledger.charge(topo, e)?;
            }
            for b in listeners {
                let d = distance(beacon.position, topo.position(b)?);
                stats.record_attempt(a, b);
                let u = keyed_uniform(env.seed, StreamTag::Beacon, [round, a.0, b.0, 0]);
                if u < env.mac.success_probability(d, range) && topo.node(b)?.is_alive() {
                    stats.record_success(a, b);
                    if settings.accounting {
                        let e = EnergyLedgerEntry::receive(b, beacon.bits, 0.0, env.radio)?;
                        ledger.charge(topo, e)?;
                    }
                }
            }
        }
    }
    build_tables(topo, stats, env)
}

fn adjacency(topo: &Topology) -> Result<Vec<Vec<NodeId>>, TopologyError> {
    topo.node_ids()
        .map(|id| {
            if topo.node(id)?.is_alive() {
                topo.neighbors(id)
            } else {
                Ok(Vec::new())
            }
        })
        .collect()
}

fn build_tables(
    topo: &Topology,
    stats: &mut LinkStatsTable,
    env: &LinkEnv<'_>,
) -> Result<NeighborTables, RoutingError> {
    let adjacency = adjacency(topo)?;
    let cold = env.metric.cold_start;
    let mut tables = Vec::with_capacity(topo.len());
    for (a, outs) in adjacency.iter().enumerate() {
        let a = NodeId(a as u32);
        let mut entries = BTreeMap::new();
        for &b in outs {
            let node_b = topo.node(b)?;
            let d = topo.distance_between(a, b)?;
            let interference = env.interference.ratio(d, adjacency[b.index()].len());
            stats.set_interference(a, b, interference);
            let neighbor_ppr = adjacency[b.index()]
                .iter()
                .map(|&j| (j, stats.node(j).ppr(cold)))
                .collect();
            entries.insert(
                b,
                NeighborEntry {
                    id: b,
                    position: node_b.position,
                    residual_energy: node_b.residual_energy(),
                    initial_energy: node_b.initial_energy(),
                    pps: stats.node(b).pps(cold),
                    interference,
                    neighbor_ppr,
                    extended: d > topo.radio_range(),
                },
            );
        }
        tables.push(NeighborTable {
            owner: Some(a),
            entries,
        });
    }
    Ok(NeighborTables::new(tables))
}

/// Node-disjoint paths between one source and one sink, fewest hops first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSet {
    pub paths: Vec<RoutePath>,
    pub source: NodeId,
    pub sink: NodeId,
}

impl PathSet {
    /// Orders `paths` by hop count; equal hop counts keep discovery order.
    pub fn new(source: NodeId, sink: NodeId, mut paths: Vec<RoutePath>) -> Self {
        paths.sort_by_key(|p| p.hop_count);
        PathSet {
            paths,
            source,
            sink,
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// True when no two paths share a node other than the endpoints and no
    /// link is used twice.
    pub fn is_node_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        let mut direct = 0;
        for p in &self.paths {
            if p.first() != self.source || p.last() != self.sink {
                return false;
            }
            if p.hop_count == 1 {
                direct += 1;
            }
            for &n in p.interior() {
                if n == self.source || n == self.sink || !seen.insert(n) {
                    return false;
                }
            }
        }
        direct <= 1
    }
}

/// How candidates must relate to the sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProgressRule {
    /// Every hop ends strictly closer to the sink.
    Strict,
    /// Any unvisited neighbor, with a hop budget.
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscoveryOptions {
    pub k: usize,
    /// Extra attempts per path index after a dead end.
    pub retries: usize,
    pub progress: ProgressRule,
    /// Relaxed mode gives up after this many times the straight-line hop estimate.
    pub hop_budget_factor: f64,
}

impl Default for DiscoveryOptions {
    fn default() -> Self {
        DiscoveryOptions {
            k: 4,
            retries: 3,
            progress: ProgressRule::Strict,
            hop_budget_factor: 4.0,
        }
    }
}

fn check_endpoints(
    topo: &Topology,
    source: NodeId,
    sink: NodeId,
    k: usize,
) -> Result<(), RoutingError> {
    if k == 0 {
        return Err(RoutingError::InvalidArgs(
            "path count k must be at least 1".into(),
        ));
    }
    if source == sink {
        return Err(RoutingError::InvalidArgs(
            "source and sink must differ".into(),
        ));
    }
    topo.node(source)?;
    topo.node(sink)?;
    Ok(())
}

fn finish_path(
    topo: &Topology,
    ids: Vec<NodeId>,
    merit: Option<(&NeighborTables, &MetricParams)>,
) -> Result<RoutePath, RoutingError> {
    let mut path = RoutePath::new(ids)?;
    for (i, (a, b)) in path.links().enumerate().collect::<Vec<_>>() {
        if topo.is_extended(a, b)? {
            path.extended_hops.push(i);
        }
    }
    if let Some((tables, params)) = merit {
        path.total_merit = total_merit(&path, tables, params)?;
    }
    Ok(path)
}

/// Builds up to `opts.k` node-disjoint paths by greedy forwarding on the link
/// suitability.
///
/// Each hop picks, among the current node's table entries, the best-scoring
/// candidate that is alive, not on an earlier path, not blacklisted, not on
/// the partial path and (in strict mode) strictly closer to the sink. A sink
/// in the candidate set is always taken. On a dead end the partial path's
/// nodes are blacklisted and the path index is retried up to
/// `opts.retries` times; when an index cannot be filled the search stops.
pub fn discover_paths(
    topo: &Topology,
    tables: &NeighborTables,
    source: NodeId,
    sink: NodeId,
    opts: &DiscoveryOptions,
    params: &MetricParams,
) -> Result<PathSet, RoutingError> {
    check_endpoints(topo, source, sink, opts.k)?;
    let sink_pos = topo.position(sink)?;
    let to_sink = |n: NodeId| distance(topo.nodes()[n.index()].position, sink_pos);
    let budget = {
        let estimate = (to_sink(source) / topo.radio_range()).ceil().max(1.0);
        (opts.hop_budget_factor * estimate).ceil() as usize
    };

    let mut used: BTreeSet<NodeId> = BTreeSet::new();
    let mut direct_used = false;
    let mut accepted = Vec::new();

    'paths: for _ in 0..opts.k {
        let mut blacklist: BTreeSet<NodeId> = BTreeSet::new();
        for _attempt in 0..=opts.retries {
            let mut partial = vec![source];
            let mut on_path: BTreeSet<NodeId> = BTreeSet::from([source]);
            let mut cur = source;
            let reached = loop {
                if cur == sink {
                    break true;
                }
                if opts.progress == ProgressRule::Relaxed && partial.len() > budget {
                    break false;
                }
                let here = to_sink(cur);
                let table = tables.table(cur)?;
                let candidates: Vec<NodeId> = table
                    .entries
                    .keys()
                    .copied()
                    .filter(|&c| {
                        let eligible = if c == sink {
                            !(cur == source && direct_used)
                        } else {
                            !used.contains(&c) && !blacklist.contains(&c) && !on_path.contains(&c)
                        };
                        let progress = match opts.progress {
                            ProgressRule::Strict => to_sink(c) < here,
                            ProgressRule::Relaxed => true,
                        };
                        eligible && progress && topo.nodes()[c.index()].is_alive()
                    })
                    .collect();
                if candidates.is_empty() {
                    break false;
                }
                let next = if candidates.contains(&sink) {
                    sink
                } else {
                    select_next_hop(table, &candidates, params)?
                };
                partial.push(next);
                on_path.insert(next);
                cur = next;
            };
            if reached {
                if partial.len() == 2 {
                    direct_used = true;
                }
                used.extend(partial[1..partial.len() - 1].iter().copied());
                accepted.push(finish_path(topo, partial, Some((tables, params)))?);
                continue 'paths;
            }
            blacklist.extend(partial[1..].iter().copied());
        }
        break;
    }

    if accepted.is_empty() {
        return Err(RoutingError::NoPath { from: source, sink });
    }
    Ok(PathSet::new(source, sink, accepted))
}

/// Shortest path by breadth-first search over `adjacency`, skipping `banned`
/// interior nodes and, optionally, the direct source-sink link. Neighbors
/// are expanded in ascending id order.
fn bfs_path(
    adjacency: &[Vec<NodeId>],
    source: NodeId,
    sink: NodeId,
    banned: &BTreeSet<NodeId>,
    forbid_direct: bool,
) -> Option<Vec<NodeId>> {
    let mut parent: Vec<Option<NodeId>> = vec![None; adjacency.len()];
    let mut seen = vec![false; adjacency.len()];
    let mut queue = VecDeque::from([source]);
    seen[source.index()] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u.index()] {
            if seen[v.index()] || (v != sink && banned.contains(&v)) {
                continue;
            }
            if v == sink && u == source && forbid_direct {
                continue;
            }
            seen[v.index()] = true;
            parent[v.index()] = Some(u);
            if v == sink {
                let mut path = vec![sink];
                let mut at = sink;
                while let Some(p) = parent[at.index()] {
                    path.push(p);
                    at = p;
                }
                path.reverse();
                return Some(path);
            }
            queue.push_back(v);
        }
    }
    None
}

/// Up to `k` node-disjoint min-hop paths: breadth-first search, remove the
/// found path's interior nodes, repeat.
pub fn minhop_paths(
    topo: &Topology,
    source: NodeId,
    sink: NodeId,
    k: usize,
    merit: Option<(&NeighborTables, &MetricParams)>,
) -> Result<PathSet, RoutingError> {
    check_endpoints(topo, source, sink, k)?;
    let adjacency = adjacency(topo)?;
    let mut banned = BTreeSet::new();
    let mut direct_used = false;
    let mut paths = Vec::new();
    for _ in 0..k {
        let Some(ids) = bfs_path(&adjacency, source, sink, &banned, direct_used) else {
            break;
        };
        if ids.len() == 2 {
            direct_used = true;
        }
        banned.extend(ids[1..ids.len() - 1].iter().copied());
        paths.push(finish_path(topo, ids, merit)?);
    }
    if paths.is_empty() {
        return Err(RoutingError::NoPath { from: source, sink });
    }
    Ok(PathSet::new(source, sink, paths))
}
