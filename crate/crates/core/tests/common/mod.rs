#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use qempar::energy::EnergyLedger;
use qempar::engine::log::{LogKind, LogRecord};
use qempar::engine::RunOutcome;
use qempar::link_metrics::{LinkStatsTable, NeighborTables};
use qempar::routing::{beacon_exchange, LinkEnv, PathSet};
use qempar::topology::{place_nodes, FallbackMode};
use qempar::{NodeId, ScenarioConfig, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Placement plus beacon phase, as the engine does it.
pub fn discovered(cfg: &ScenarioConfig, seed: u64) -> (Topology, NeighborTables) {
    let radio = cfg.radio().unwrap();
    let mac = cfg.mac();
    let interference = cfg.interference_model();
    let metric = cfg.metric_params();
    let mut topo = place_nodes(cfg, seed).unwrap();
    let mut stats = LinkStatsTable::new(topo.len(), cfg.stats_decay);
    let mut ledger = EnergyLedger::new();
    let env = LinkEnv {
        radio: &radio,
        mac: &mac,
        interference: &interference,
        metric: &metric,
        seed,
    };
    let tables = beacon_exchange(
        &mut topo,
        &mut stats,
        &mut ledger,
        &cfg.beacon_settings(),
        &env,
    )
    .unwrap();
    (topo, tables)
}

/// A random field with 20-100 nodes and a random range and fallback mode.
pub fn random_field(case: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + case);
    let side = rng.random_range(150.0..400.0);
    let fallback = [
        FallbackMode::Progress,
        FallbackMode::Isolated,
        FallbackMode::Off,
    ][rng.random_range(0..3)];
    ScenarioConfig {
        node_count: rng.random_range(20..=100),
        field_width_m: side,
        field_height_m: side,
        source_x_m: side * rng.random_range(0.5..1.0),
        source_y_m: side * rng.random_range(0.5..1.0),
        radio_range_m: rng.random_range(30.0..80.0),
        fallback,
        ..ScenarioConfig::default()
    }
}

/// Structural checks on a path set, written independently of the library's
/// own validation.
pub fn check_path_set(topo: &Topology, ps: &PathSet) -> Result<(), String> {
    let (src, sink) = (topo.source(), topo.sink());
    let mut interiors: BTreeSet<NodeId> = BTreeSet::new();
    let mut direct = 0;
    for (i, p) in ps.paths.iter().enumerate() {
        let ids = &p.node_ids;
        if ids.first() != Some(&src) || ids.last() != Some(&sink) {
            return Err(format!("path {i} does not run source to sink: {ids:?}"));
        }
        if p.hop_count + 1 != ids.len() {
            return Err(format!(
                "path {i} hop count {} disagrees with {} nodes",
                p.hop_count,
                ids.len()
            ));
        }
        let unique: BTreeSet<_> = ids.iter().collect();
        if unique.len() != ids.len() {
            return Err(format!("path {i} has a cycle: {ids:?}"));
        }
        if ids.len() == 2 {
            direct += 1;
        }
        for &n in &ids[1..ids.len() - 1] {
            if !interiors.insert(n) {
                return Err(format!("node {n} shared between paths"));
            }
        }
        for (h, w) in ids.windows(2).enumerate() {
            if !topo.neighbors(w[0]).unwrap().contains(&w[1]) {
                return Err(format!("path {i} uses non-link {} -> {}", w[0], w[1]));
            }
            let extended = topo.distance_between(w[0], w[1]).unwrap() > topo.radio_range();
            if extended != p.extended_hops.contains(&h) {
                return Err(format!("path {i} hop {h} extended flag wrong"));
            }
        }
    }
    if direct > 1 {
        return Err("direct link used more than once".into());
    }
    Ok(())
}

/// All-pairs hop distances by Floyd-Warshall over the neighbor relation;
/// returns the source-to-sink distance.
pub fn hop_distance(topo: &Topology) -> Option<usize> {
    let n = topo.len();
    const INF: usize = usize::MAX / 4;
    let mut d = vec![vec![INF; n]; n];
    for a in topo.node_ids() {
        d[a.index()][a.index()] = 0;
        for b in topo.neighbors(a).unwrap() {
            d[a.index()][b.index()] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    let h = d[topo.source().index()][topo.sink().index()];
    (h < INF).then_some(h)
}

/// Per-packet delay recomputed from the event log: latest first arrival of
/// each fragment minus the packet's birth time, for packets the log marks
/// complete.
pub fn delays_from_log(log: &[LogRecord]) -> BTreeMap<u64, f64> {
    let mut born = BTreeMap::new();
    let mut arrivals: BTreeMap<u64, BTreeMap<u32, f64>> = BTreeMap::new();
    let mut complete = BTreeSet::new();
    for r in log {
        match r.event {
            LogKind::PacketBorn => {
                born.insert(r.packet.unwrap(), r.t);
            }
            LogKind::FragmentDelivered => {
                arrivals
                    .entry(r.packet.unwrap())
                    .or_default()
                    .entry(r.seq.unwrap())
                    .or_insert(r.t);
            }
            LogKind::PacketComplete => {
                complete.insert(r.packet.unwrap());
            }
            _ => {}
        }
    }
    complete
        .into_iter()
        .map(|p| {
            let last = arrivals[&p]
                .values()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            (p, last - born[&p])
        })
        .collect()
}

/// Checks the energy identities and the delay re-derivation on one run.
pub fn check_run(o: &RunOutcome) -> Result<(), String> {
    let total = o.ledger.total();
    let consumed: f64 = o.topology.nodes().iter().map(|n| n.consumed_energy()).sum();
    let tol = 1e-12 * total.abs().max(f64::MIN_POSITIVE);
    if (consumed - total).abs() > tol {
        return Err(format!("ledger {total} vs consumed {consumed}"));
    }
    if o.metrics.clamped_debits == 0 {
        let drawn: f64 = o
            .topology
            .nodes()
            .iter()
            .map(|n| n.initial_energy() - n.residual_energy())
            .sum();
        if (drawn - total).abs() > tol {
            return Err(format!("ledger {total} vs initial - residual {drawn}"));
        }
    }
    let radio = qempar::energy::RadioParams::reference();
    for e in o.ledger.entries() {
        if e.recompute(&radio).unwrap() != e.joules {
            return Err(format!("ledger entry does not recompute: {e:?}"));
        }
    }
    let logged = delays_from_log(&o.log);
    let measured: BTreeMap<u64, f64> = o
        .packets
        .iter()
        .filter_map(|p| p.delay.map(|d| (p.id, d)))
        .collect();
    if logged != measured {
        return Err(format!(
            "delays differ: {} from log vs {} measured",
            logged.len(),
            measured.len()
        ));
    }
    Ok(())
}
