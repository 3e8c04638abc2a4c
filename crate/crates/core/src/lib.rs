//! Deterministic discrete-event simulator for QoS- and energy-aware
//! multi-path routing in wireless sensor networks.
//!
//! A run places sensors in a rectangular field, exchanges beacons so every
//! node learns about its neighborhood, discovers a set of node-disjoint
//! source-to-sink paths, and then pushes real-time traffic through them:
//! each packet is split into tiny packets which travel over different paths
//! and are reassembled at the sink. A min-hop multi-path router is provided
//! as the comparison baseline.
//!
//! Module map:
//!
//! - [`topology`]: node placement, geometry and radio neighborhoods.
//! - [`energy`]: first-order radio energy model and the energy ledger.
//! - [`link_metrics`]: link statistics and the four-term link suitability.
//! - [`routing`]: beacon exchange, greedy disjoint-path discovery, min-hop baseline.
//! - [`dispatch`]: fragmentation, path classes, sequence assignment, reassembly.
//! - [`engine`]: the event loop and per-run metrics.
//! - [`sweep`]: rate by seed comparisons between routers.
//! - [`config`] and [`report`]: scenario files and CSV/JSON output.

pub mod config;
pub mod dispatch;
pub mod energy;
pub mod engine;
pub mod link_metrics;
pub mod report;
pub mod rng;
pub mod routing;
pub mod sweep;
pub mod topology;

mod error;

pub use config::{load_config, Provenance, ResolvedConfig, RouterSelection, ScenarioConfig};
pub use engine::{run, RouterKind, RunMetrics, RunOutcome, Simulation};
pub use error::Error;
pub use report::{emit_report, ComparisonTable, ReportFormat, ReportRow};
pub use sweep::compare;
pub use topology::{NodeId, Position, Topology};
