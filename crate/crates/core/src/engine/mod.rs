//! Discrete-event simulation of one scenario run.
//!
//! A run has two phases. Discovery happens at time zero: node placement,
//! beacon rounds, then path search by the selected router. Traffic follows:
//! the source generates packets, each packet is fragmented and its tiny
//! packets are queued hop by hop along their paths. Every node sends one
//! frame at a time from a FIFO queue; a failed hop is retried at the head of
//! the queue up to `hop_retries` times and then dropped. Packets not
//! reassembled at the sink by their deadline expire.
//!
//! All randomness is keyed on the seed, so a run is a pure function of
//! `(config, router, rate, seed)`. Link outcomes are keyed on
//! `(packet, sequence, hop, attempt)` and are shared across routers and
//! rates.

pub mod event;
pub mod log;
pub mod mac;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::io::{self, Write};

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ScenarioConfig, TrafficModel};
use crate::dispatch::{self, DataPacket, DeliveryStatus, ReassemblyBuffer, TinyPacket};
use crate::energy::{EnergyLedger, EnergyLedgerEntry, RadioParams};
use crate::error::Error;
use crate::link_metrics::{LinkStatsTable, RoutePath};
use crate::rng::{self, StreamTag};
use crate::routing::{self, LinkEnv, PathSet, RoutingError};
use crate::topology::{self, NodeId, Topology};

use event::{EventKind, EventQueue, Frame};
use log::{LogKind, LogRecord};
use mac::MacModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouterKind {
    /// Suitability-driven disjoint paths, packets split across them.
    Qempar,
    /// Min-hop path, whole packets.
    MinHop,
}

impl fmt::Display for RouterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RouterKind::Qempar => "qempar",
            RouterKind::MinHop => "minhop",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PacketRecord {
    pub id: u64,
    pub creation_time: f64,
    pub status: DeliveryStatus,
    pub delay: Option<f64>,
}

/// Summary of one run. Quantities with no defined value are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub router: RouterKind,
    pub rate: f64,
    pub seed: u64,
    /// No source-to-sink path was found; every packet is lost.
    pub no_path: bool,
    pub paths_found: usize,
    pub paths_used: usize,
    pub mean_path_hops: Option<f64>,
    pub generated: u64,
    pub delivered: u64,
    pub expired: u64,
    pub delivery_ratio: Option<f64>,
    pub mean_delay_s: Option<f64>,
    pub max_delay_s: Option<f64>,
    /// Traffic-phase energy of the nodes on the paths in use, per delivered packet.
    pub energy_per_packet_j: Option<f64>,
    pub path_energy_j: f64,
    pub data_energy_j: f64,
    pub discovery_energy_j: f64,
    pub total_energy_j: f64,
    pub fragments_sent: u64,
    pub fragments_dropped: u64,
    pub fragments_stranded: u64,
    pub hop_attempts: u64,
    pub hop_failures: u64,
    pub out_of_order_rate: Option<f64>,
    pub dead_nodes: usize,
    pub clamped_debits: usize,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub packets: Vec<PacketRecord>,
    pub ledger: EnergyLedger,
    /// Ledger entries before this index belong to discovery.
    pub discovery_entries: usize,
    pub topology: Topology,
    pub stats: LinkStatsTable,
    /// Link counters as they stood after the beacon phase.
    pub discovery_stats: LinkStatsTable,
    pub paths: Option<PathSet>,
    /// Paths carrying traffic, in assignment order.
    pub routes: Vec<RoutePath>,
    /// Empty unless the event log was enabled.
    pub log: Vec<LogRecord>,
}

impl RunOutcome {
    pub fn write_event_log<W: Write>(&self, out: W) -> io::Result<()> {
        log::write_jsonl(&self.log, out)
    }
}

/// Packet creation times in `[0, duration)`.
pub fn arrival_times(model: TrafficModel, rate: f64, duration: f64, seed: u64) -> Vec<f64> {
    if rate <= 0.0 {
        return Vec::new();
    }
    match model {
        TrafficModel::Deterministic => (0u64..)
            .map(|j| j as f64 / rate)
            .take_while(|t| *t < duration)
            .collect(),
        TrafficModel::Poisson => {
            // unit exponentials scaled by 1/rate: every rate sees the same draws
            let mut rng = rng::stream(seed, StreamTag::Traffic);
            let mut acc = 0.0;
            std::iter::from_fn(|| {
                let e: f64 = Exp1.sample(&mut rng);
                acc += e;
                Some(acc / rate)
            })
            .take_while(|t| *t < duration)
            .collect()
        }
    }
}

/// One configured run.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ScenarioConfig,
    router: RouterKind,
    rate: f64,
    seed: u64,
    event_log: bool,
}

impl Simulation {
    pub fn new(config: &ScenarioConfig, router: RouterKind, rate: f64, seed: u64) -> Self {
        Simulation {
            config: config.clone(),
            router,
            rate,
            seed,
            event_log: false,
        }
    }

    pub fn with_event_log(mut self, enabled: bool) -> Self {
        self.event_log = enabled;
        self
    }

    pub fn run(self) -> Result<RunOutcome, Error> {
        let cfg = &self.config;
        cfg.validate()?;
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(ConfigError::Validation(format!(
                "rate must be a non-negative number, got {}",
                self.rate
            ))
            .into());
        }
        let radio = cfg.radio()?;
        let mac = cfg.mac();
        let interference = cfg.interference_model();
        let metric = cfg.metric_params();

        let mut topo = topology::place_nodes(cfg, self.seed)?;
        let mut stats = LinkStatsTable::new(topo.len(), cfg.stats_decay);
        let mut ledger = EnergyLedger::new();
        let env = LinkEnv {
            radio: &radio,
            mac: &mac,
            interference: &interference,
            metric: &metric,
            seed: self.seed,
        };
        let tables = routing::beacon_exchange(
            &mut topo,
            &mut stats,
            &mut ledger,
            &cfg.beacon_settings(),
            &env,
        )?;
        let discovery_entries = ledger.len();
        let discovery_energy = ledger.total();
        let discovery_stats = stats.clone();

        let (source, sink) = (topo.source(), topo.sink());
        let found = match self.router {
            RouterKind::Qempar => routing::discover_paths(
                &topo,
                &tables,
                source,
                sink,
                &cfg.discovery_options(),
                &metric,
            ),
            RouterKind::MinHop => routing::minhop_paths(
                &topo,
                source,
                sink,
                cfg.paths_k as usize,
                Some((&tables, &metric)),
            ),
        };
        let paths = match found {
            Ok(p) => Some(p),
            Err(RoutingError::NoPath { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let routes: Vec<RoutePath> = match (&paths, self.router) {
            (None, _) => Vec::new(),
            (Some(p), RouterKind::Qempar) => {
                let mut ordered = dispatch::classify_paths(p)?;
                ordered.truncate(cfg.paths_k as usize);
                ordered
            }
            (Some(p), RouterKind::MinHop) => vec![p.paths[0].clone()],
        };
        let (k, header_bits) = match self.router {
            RouterKind::Qempar => (cfg.paths_k, cfg.fragment_header_bytes * 8),
            RouterKind::MinHop => (1, 0),
        };

        let in_range = topo
            .node_ids()
            .map(|a| {
                topo.node_ids()
                    .filter(|&b| {
                        b != a
                            && topo
                                .distance_between(a, b)
                                .map(|d| d <= topo.radio_range())
                                .unwrap_or(false)
                    })
                    .collect()
            })
            .collect();

        let mut world = World {
            cfg,
            seed: self.seed,
            radio,
            mac,
            k,
            header_bits,
            topo,
            stats,
            ledger,
            routes,
            in_range,
            macs: Vec::new(),
            queue: EventQueue::new(),
            buffer: ReassemblyBuffer::new(),
            packets: Vec::new(),
            log: self.event_log.then(Vec::new),
            fragments_sent: 0,
            fragments_dropped: 0,
            fragments_stranded: 0,
            hop_attempts: 0,
            hop_failures: 0,
        };
        world.macs = (0..world.topo.len()).map(|_| NodeMac::default()).collect();
        world.emit(|| {
            let mut r = LogRecord::new(0.0, LogKind::Discovery);
            r.joules = Some(discovery_energy);
            r
        });

        let times = arrival_times(cfg.traffic, self.rate, cfg.duration_s, self.seed);
        for (id, t) in times.into_iter().enumerate() {
            world.packets.push(DataPacket {
                id: id as u64,
                bits: cfg.packet_bits(),
                creation_time: t,
            });
            world
                .queue
                .schedule(t, EventKind::PacketBorn { packet: id as u64 });
        }
        while let Some(ev) = world.queue.pop() {
            world.handle(ev.kind)?;
        }

        Ok(world.finish(
            self.router,
            self.rate,
            paths,
            discovery_entries,
            discovery_energy,
            discovery_stats,
        ))
    }
}

/// Runs one scenario and returns its metrics.
pub fn run(
    config: &ScenarioConfig,
    router: RouterKind,
    rate: f64,
    seed: u64,
) -> Result<RunMetrics, Error> {
    Ok(Simulation::new(config, router, rate, seed).run()?.metrics)
}

#[derive(Debug, Default)]
struct NodeMac {
    queue: VecDeque<Frame>,
    transmitting: bool,
    start_pending: bool,
}

struct World<'c> {
    cfg: &'c ScenarioConfig,
    seed: u64,
    radio: RadioParams,
    mac: MacModel,
    k: u32,
    header_bits: u64,
    topo: Topology,
    stats: LinkStatsTable,
    ledger: EnergyLedger,
    routes: Vec<RoutePath>,
    in_range: Vec<Vec<NodeId>>,
    macs: Vec<NodeMac>,
    queue: EventQueue,
    buffer: ReassemblyBuffer,
    packets: Vec<DataPacket>,
    log: Option<Vec<LogRecord>>,
    fragments_sent: u64,
    fragments_dropped: u64,
    fragments_stranded: u64,
    hop_attempts: u64,
    hop_failures: u64,
}

impl World<'_> {
    fn now(&self) -> f64 {
        self.queue.now()
    }

    fn emit(&mut self, make: impl FnOnce() -> LogRecord) {
        if let Some(log) = self.log.as_mut() {
            log.push(make());
        }
    }

    fn frame_record(&self, kind: LogKind, f: &Frame) -> LogRecord {
        let mut r = LogRecord::new(self.now(), kind);
        r.packet = Some(f.packet);
        r.seq = Some(f.seq);
        r.path = Some(f.path);
        r.from = Some(f.from);
        r.to = Some(f.to);
        r.bits = Some(f.wire_bits());
        r
    }

    fn kick(&mut self, node: NodeId) {
        let m = &mut self.macs[node.index()];
        if !m.transmitting && !m.start_pending && !m.queue.is_empty() {
            m.start_pending = true;
            let now = self.now();
            self.queue.schedule(now, EventKind::HopStart { node });
        }
    }

    fn handle(&mut self, kind: EventKind) -> Result<(), Error> {
        match kind {
            EventKind::PacketBorn { packet } => self.packet_born(packet),
            EventKind::HopStart { node } => self.hop_start(node),
            EventKind::HopComplete { frame } => self.hop_complete(frame),
            EventKind::HopFailed { frame } => {
                self.hop_failed(frame);
                Ok(())
            }
            EventKind::FragmentDelivered { frame } => self.fragment_delivered(frame),
            EventKind::DeadlineExpired { packet } => {
                let now = self.now();
                if self.buffer.expire(packet, now)? == DeliveryStatus::Expired {
                    self.emit(|| {
                        let mut r = LogRecord::new(now, LogKind::DeadlineExpired);
                        r.packet = Some(packet);
                        r
                    });
                }
                Ok(())
            }
        }
    }

    fn packet_born(&mut self, id: u64) -> Result<(), Error> {
        let packet = self.packets[id as usize];
        let now = self.now();
        self.emit(|| {
            let mut r = LogRecord::new(now, LogKind::PacketBorn);
            r.packet = Some(id);
            r.bits = Some(packet.bits);
            r
        });
        let deadline = packet.creation_time + self.cfg.reassembly_deadline_s;
        self.buffer.register(&packet, self.k, deadline);
        self.queue
            .schedule(deadline, EventKind::DeadlineExpired { packet: id });
        if self.routes.is_empty() {
            return Ok(());
        }
        let fragments = dispatch::fragment(&packet, self.k, self.header_bits)?;
        let source = self.topo.source();
        for (tiny, path) in dispatch::assign(fragments, &self.routes, self.cfg.wrap_fragments)? {
            let ids = &self.routes[path].node_ids;
            self.macs[source.index()].queue.push_back(Frame {
                packet: id,
                seq: tiny.seq,
                path,
                hop: 0,
                attempt: 0,
                payload_bits: tiny.bits,
                header_bits: tiny.header_bits,
                from: ids[0],
                to: ids[1],
            });
            self.fragments_sent += 1;
        }
        self.kick(source);
        Ok(())
    }

    fn hop_start(&mut self, node: NodeId) -> Result<(), Error> {
        let now = self.now();
        self.macs[node.index()].start_pending = false;
        if self.macs[node.index()].transmitting {
            return Ok(());
        }
        if !self.topo.node(node)?.is_alive() {
            let stranded: Vec<Frame> = self.macs[node.index()].queue.drain(..).collect();
            for f in stranded {
                self.fragments_stranded += 1;
                let r = self.frame_record(LogKind::FragmentStranded, &f);
                self.emit(|| r);
            }
            return Ok(());
        }
        let Some(frame) = self.macs[node.index()].queue.pop_front() else {
            return Ok(());
        };
        let active = self.in_range[node.index()]
            .iter()
            .filter(|n| self.macs[n.index()].transmitting)
            .count();
        let delay = self.mac.hop_delay(frame.wire_bits(), active);
        self.macs[node.index()].transmitting = true;

        let d = self.topo.distance_between(frame.from, frame.to)?;
        let entry =
            EnergyLedgerEntry::transmit(frame.from, frame.wire_bits(), d, now, &self.radio)?;
        let joules = entry.joules;
        self.ledger.charge(&mut self.topo, entry)?;
        self.stats.record_attempt(frame.from, frame.to);
        self.hop_attempts += 1;
        let mut r = self.frame_record(LogKind::HopStart, &frame);
        r.joules = Some(joules);
        self.emit(|| r);

        let u = rng::keyed_uniform(
            self.seed,
            StreamTag::DataLink,
            [
                frame.packet as u32,
                frame.seq,
                frame.hop as u32,
                frame.attempt,
            ],
        );
        let ok = u < self.mac.success_probability(d, self.topo.radio_range())
            && self.topo.node(frame.to)?.is_alive();
        let kind = if ok {
            EventKind::HopComplete { frame }
        } else {
            EventKind::HopFailed { frame }
        };
        self.queue.schedule(now + delay, kind);
        Ok(())
    }

    fn hop_complete(&mut self, frame: Frame) -> Result<(), Error> {
        let now = self.now();
        self.macs[frame.from.index()].transmitting = false;
        self.kick(frame.from);

        let entry = EnergyLedgerEntry::receive(frame.to, frame.wire_bits(), now, &self.radio)?;
        let joules = entry.joules;
        self.ledger.charge(&mut self.topo, entry)?;
        self.stats.record_success(frame.from, frame.to);
        let mut r = self.frame_record(LogKind::HopComplete, &frame);
        r.joules = Some(joules);
        self.emit(|| r);

        if frame.to == self.topo.sink() {
            self.queue
                .schedule(now, EventKind::FragmentDelivered { frame });
            return Ok(());
        }
        let ids = &self.routes[frame.path].node_ids;
        let next = Frame {
            hop: frame.hop + 1,
            attempt: 0,
            from: frame.to,
            to: ids[frame.hop + 2],
            ..frame
        };
        self.macs[frame.to.index()].queue.push_back(next);
        self.kick(frame.to);
        Ok(())
    }

    fn hop_failed(&mut self, frame: Frame) {
        self.macs[frame.from.index()].transmitting = false;
        self.hop_failures += 1;
        let r = self.frame_record(LogKind::HopFailed, &frame);
        self.emit(|| r);
        if frame.attempt < self.cfg.hop_retries {
            let retry = Frame {
                attempt: frame.attempt + 1,
                ..frame
            };
            self.macs[frame.from.index()].queue.push_front(retry);
        } else {
            self.fragments_dropped += 1;
            let r = self.frame_record(LogKind::FragmentDropped, &frame);
            self.emit(|| r);
        }
        self.kick(frame.from);
    }

    fn fragment_delivered(&mut self, frame: Frame) -> Result<(), Error> {
        let now = self.now();
        let before = self.buffer.status(frame.packet);
        let packet = self.packets[frame.packet as usize];
        let tiny = TinyPacket {
            parent: frame.packet,
            seq: frame.seq,
            bits: frame.payload_bits,
            header_bits: frame.header_bits,
            path_index: Some(frame.path),
            creation_time: packet.creation_time,
            arrival_time: Some(now),
        };
        let after = self.buffer.reassemble(&tiny, now)?;
        let r = self.frame_record(LogKind::FragmentDelivered, &frame);
        self.emit(|| r);
        if after == DeliveryStatus::Complete && before != Some(DeliveryStatus::Complete) {
            let delay = self.buffer.delay(frame.packet);
            self.emit(|| {
                let mut r = LogRecord::new(now, LogKind::PacketComplete);
                r.packet = Some(frame.packet);
                r.delay = delay;
                r
            });
        }
        Ok(())
    }

    fn finish(
        self,
        router: RouterKind,
        rate: f64,
        paths: Option<PathSet>,
        discovery_entries: usize,
        discovery_energy: f64,
        discovery_stats: LinkStatsTable,
    ) -> RunOutcome {
        let packets: Vec<PacketRecord> = self
            .packets
            .iter()
            .map(|p| PacketRecord {
                id: p.id,
                creation_time: p.creation_time,
                status: self.buffer.status(p.id).unwrap_or(DeliveryStatus::Pending),
                delay: self.buffer.delay(p.id),
            })
            .collect();
        let generated = packets.len() as u64;
        let delivered = packets
            .iter()
            .filter(|p| p.status == DeliveryStatus::Complete)
            .count() as u64;
        let expired = packets
            .iter()
            .filter(|p| p.status == DeliveryStatus::Expired)
            .count() as u64;
        let delays: Vec<f64> = packets.iter().filter_map(|p| p.delay).collect();
        let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);

        let on_routes: BTreeSet<NodeId> = self
            .routes
            .iter()
            .flat_map(|r| r.node_ids.iter().copied())
            .collect();
        let traffic = &self.ledger.entries()[discovery_entries..];
        let path_energy: f64 = crate::energy::CompensatedSum::from_iter(
            traffic
                .iter()
                .filter(|e| on_routes.contains(&e.node))
                .map(|e| e.joules),
        )
        .value();
        let data_energy: f64 =
            crate::energy::CompensatedSum::from_iter(traffic.iter().map(|e| e.joules)).value();
        let hops: Vec<f64> = self.routes.iter().map(|r| r.hop_count as f64).collect();

        let metrics = RunMetrics {
            router,
            rate,
            seed: self.seed,
            no_path: paths.is_none(),
            paths_found: paths.as_ref().map_or(0, |p| p.len()),
            paths_used: self.routes.len(),
            mean_path_hops: mean(&hops),
            generated,
            delivered,
            expired,
            delivery_ratio: (generated > 0).then(|| delivered as f64 / generated as f64),
            mean_delay_s: mean(&delays),
            max_delay_s: delays.iter().copied().reduce(f64::max),
            energy_per_packet_j: (delivered > 0).then(|| path_energy / delivered as f64),
            path_energy_j: path_energy,
            data_energy_j: data_energy,
            discovery_energy_j: discovery_energy,
            total_energy_j: self.ledger.total(),
            fragments_sent: self.fragments_sent,
            fragments_dropped: self.fragments_dropped,
            fragments_stranded: self.fragments_stranded,
            hop_attempts: self.hop_attempts,
            hop_failures: self.hop_failures,
            out_of_order_rate: (self.buffer.fragments_received() > 0).then(|| {
                self.buffer.out_of_order() as f64 / self.buffer.fragments_received() as f64
            }),
            dead_nodes: self.topo.nodes().iter().filter(|n| !n.is_alive()).count(),
            clamped_debits: self.ledger.clamped_debits(),
        };
        RunOutcome {
            metrics,
            packets,
            ledger: self.ledger,
            discovery_entries,
            topology: self.topo,
            stats: self.stats,
            discovery_stats,
            paths,
            routes: self.routes,
            log: self.log.unwrap_or_default(),
        }
    }
}
