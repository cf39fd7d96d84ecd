//! Built-in scenario matrix: a single-ride base case plus crowdsourced and
//! automated fleets at four sharing discounts.

use std::path::PathBuf;

use ftsim::engine::{ModelParams, Scenario};
use ftsim::supply::FleetKind;

use crate::config::{ConfigFile, GridSpec, NetworkSpec, PopulationSpec};

pub const TABLE_10_1: &str = "table10.1";

/// Labels in preset order.
pub const LABELS: [&str; 9] = [
    "Base", "HDV_0", "HDV_15", "HDV_25", "HDV_50", "AV_0", "AV_15", "AV_25", "AV_50",
];

pub const DEFAULT_GRID: GridSpec = GridSpec {
    rows: 17,
    cols: 17,
    link_length_m: 250.0,
    speed_mps: 10.0,
    seed: 0,
    depot_access_m: 0.0,
};

pub const DEFAULT_TRAVELERS: usize = 2000;

fn row(label: &str, kind: FleetKind, capacity: usize, threshold: f64, discount: f64, cost: f64) -> Scenario {
    Scenario {
        label: label.to_string(),
        fleet_kind: kind,
        max_fleet: 10,
        capacity,
        profit_threshold: threshold,
        base_fare: 4.25,
        increment_fare: 0.25,
        increment_distance_m: 130.0,
        discount_pct: discount,
        operating_cost_per_km: cost,
        gamma: 0.5,
        kappa: 0.0,
        days: 10,
        commission_rate: 0.2,
        fleet_floor: 1,
        driver_lambda: 0.3,
        initial_driver_profit: None,
    }
}

pub fn scenarios() -> Vec<Scenario> {
    use FleetKind::{AvCentral, HdvCrowdsourced};
    let mut v = vec![row("Base", HdvCrowdsourced, 1, 1.0, 0.0, 0.0)];
    for d in [0.0, 15.0, 25.0, 50.0] {
        v.push(row(&format!("HDV_{d}"), HdvCrowdsourced, 4, 25.0, d, 0.51));
    }
    for d in [0.0, 15.0, 25.0, 50.0] {
        v.push(row(&format!("AV_{d}"), AvCentral, 4, 0.0, d, 0.51));
    }
    v
}

pub fn table10_1() -> ConfigFile {
    ConfigFile {
        network: NetworkSpec::Grid(DEFAULT_GRID),
        population: PopulationSpec::Synthetic {
            count: DEFAULT_TRAVELERS,
        },
        model: ModelParams::default(),
        scenarios: scenarios(),
        output_dir: PathBuf::from("results"),
        seed: 7,
        replications: 10,
    }
}

pub fn by_name(name: &str) -> Option<ConfigFile> {
    (name == TABLE_10_1).then(table10_1)
}
