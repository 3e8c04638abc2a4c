use thiserror::Error;

use crate::config::ConfigError;
use crate::dispatch::DispatchError;
use crate::energy::EnergyError;
use crate::link_metrics::LinkError;
use crate::report::ReportError;
use crate::routing::RoutingError;
use crate::topology::TopologyError;

/// Top-level error for anything that can fail while setting up or running a scenario.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Report(#[from] ReportError),
}
