//! Rate by seed sweeps. Runs execute in parallel; results are merged in
//! `(rate, router, seed)` input order, so output does not depend on
//! scheduling.

use rayon::prelude::*;

use crate::config::{RouterSelection, ScenarioConfig};
use crate::engine::{self, RouterKind, RunMetrics};
use crate::error::Error;
use crate::report::{ComparisonTable, ReportRow};

impl RouterSelection {
    pub fn routers(self) -> Vec<RouterKind> {
        match self {
            RouterSelection::Qempar => vec![RouterKind::Qempar],
            RouterSelection::Minhop => vec![RouterKind::MinHop],
            RouterSelection::Both => vec![RouterKind::Qempar, RouterKind::MinHop],
        }
    }
}

/// QEMPAR against the min-hop baseline over every `(rate, seed)` cell.
pub fn compare(
    scenario: &ScenarioConfig,
    rates: &[f64],
    seeds: &[u64],
) -> Result<ComparisonTable, Error> {
    compare_routers(
        scenario,
        rates,
        seeds,
        &[RouterKind::Qempar, RouterKind::MinHop],
    )
}

pub fn compare_routers(
    scenario: &ScenarioConfig,
    rates: &[f64],
    seeds: &[u64],
    routers: &[RouterKind],
) -> Result<ComparisonTable, Error> {
    let cells: Vec<(f64, RouterKind, u64)> = rates
        .iter()
        .flat_map(|&rate| {
            routers
                .iter()
                .flat_map(move |&r| seeds.iter().map(move |&s| (rate, r, s)))
        })
        .collect();
    let runs: Vec<RunMetrics> = cells
        .par_iter()
        .map(|&(rate, router, seed)| engine::run(scenario, router, rate, seed))
        .collect::<Result<_, _>>()?;
    Ok(aggregate(runs, seeds.len()))
}

/// Groups consecutive runs `per_row` at a time (one rate and router each)
/// into report rows.
pub fn aggregate(runs: Vec<RunMetrics>, per_row: usize) -> ComparisonTable {
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let rows = runs
        .chunks(per_row.max(1))
        .filter(|c| !c.is_empty())
        .map(|chunk| ReportRow {
            rate_pkts_per_s: chunk[0].rate,
            router: chunk[0].router,
            mean_delay_s: mean(chunk.iter().filter_map(|m| m.mean_delay_s).collect()),
            mean_energy_j: mean(chunk.iter().filter_map(|m| m.energy_per_packet_j).collect()),
            delivery_ratio: mean(chunk.iter().filter_map(|m| m.delivery_ratio).collect()),
            n_seeds: chunk.len(),
        })
        .collect();
    ComparisonTable { rows, runs }
}
