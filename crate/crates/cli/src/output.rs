//! Row types of the CSV outputs and the run manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use ftsim::engine::{DayMetrics, RunResult};
use ftsim::Mode;

use crate::CliError;

/// One line of `metrics.csv`. The first thirteen columns are the public
/// contract; the trailing accounting columns feed the audits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub replication: usize,
    pub day: usize,
    pub ridership: usize,
    pub mean_wait_s: f64,
    pub fleet_size: usize,
    pub profit: f64,
    pub consumer_surplus: f64,
    pub share_auto: f64,
    pub share_bus: f64,
    pub share_walk: f64,
    pub share_bike: f64,
    pub share_fts: f64,
    pub wait_count: usize,
    pub revenue: f64,
    pub operating_cost: f64,
    pub distance_m: f64,
    pub traveler_spend: f64,
    pub converged_day: Option<usize>,
}

impl MetricsRow {
    pub fn new(run: &RunResult, replication: usize, m: &DayMetrics) -> Self {
        MetricsRow {
            scenario: run.label.clone(),
            replication,
            day: m.day,
            ridership: m.ridership,
            mean_wait_s: round(m.mean_wait_s, 3),
            fleet_size: m.fleet_size,
            profit: round(m.total_profit, 2),
            consumer_surplus: round(m.consumer_surplus, 2),
            share_auto: round(m.shares[Mode::Auto], 6),
            share_bus: round(m.shares[Mode::Bus], 6),
            share_walk: round(m.shares[Mode::Walk], 6),
            share_bike: round(m.shares[Mode::Bike], 6),
            share_fts: round(m.shares[Mode::Fts], 6),
            wait_count: m.wait_count,
            revenue: round(m.revenue, 2),
            operating_cost: round(m.operating_cost, 2),
            distance_m: round(m.distance_m, 1),
            traveler_spend: round(m.traveler_spend, 2),
            converged_day: run.convergence_day,
        }
    }
}

fn round(x: f64, digits: i32) -> f64 {
    let p = 10f64.powi(digits);
    let r = (x * p).round() / p;
    // Avoid "-0" in the output.
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Runtime(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<MetricsRow>, _>>()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub replications: usize,
    pub scenarios: Vec<String>,
    pub replication_seeds: Vec<u64>,
    pub resolved_config: serde_json::Value,
}
