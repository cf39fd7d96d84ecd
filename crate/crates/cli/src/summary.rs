//! Cross-scenario comparison computed from `metrics.csv` alone.

use serde::{Deserialize, Serialize};

use crate::output::MetricsRow;
use crate::CliError;

/// Trailing days that define the equilibrium and the fleet-variance window.
pub const EQUILIBRIUM_WINDOW: usize = 20;

/// Label the relative deltas are measured against.
pub const BASELINE: &str = "Base";

/// Equilibrium statistics of one scenario replication.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicationStats {
    pub scenario: String,
    pub replication: usize,
    pub ridership: f64,
    /// Ridership-weighted mean wait over the window, seconds.
    pub mean_wait_s: f64,
    pub final_fleet: usize,
    pub fleet_variance: f64,
    pub profit: f64,
    pub consumer_surplus: f64,
    pub converged: bool,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs.iter().copied());
    mean(xs.iter().map(|x| (x - m) * (x - m)))
}

/// The last `EQUILIBRIUM_WINDOW` adjusted days (day 0 only if nothing else).
pub fn window(days: &[&MetricsRow]) -> Vec<MetricsRow> {
    let adjusted: Vec<&MetricsRow> = days.iter().copied().filter(|r| r.day > 0).collect();
    let pool = if adjusted.is_empty() { days.to_vec() } else { adjusted };
    let start = pool.len().saturating_sub(EQUILIBRIUM_WINDOW);
    pool[start..].iter().map(|r| (*r).clone()).collect()
}

fn stats_for(days: &[&MetricsRow]) -> ReplicationStats {
    let w = window(days);
    let riders: usize = w.iter().map(|r| r.wait_count).sum();
    let wait = if riders == 0 {
        0.0
    } else {
        w.iter().map(|r| r.mean_wait_s * r.wait_count as f64).sum::<f64>() / riders as f64
    };
    let fleet: Vec<f64> = w.iter().map(|r| r.fleet_size as f64).collect();
    let last = days.last().expect("nonempty replication");
    ReplicationStats {
        scenario: last.scenario.clone(),
        replication: last.replication,
        ridership: mean(w.iter().map(|r| r.ridership as f64)),
        mean_wait_s: wait,
        final_fleet: last.fleet_size,
        fleet_variance: variance(&fleet),
        profit: mean(w.iter().map(|r| r.profit)),
        consumer_surplus: mean(w.iter().map(|r| r.consumer_surplus)),
        converged: last.converged_day.is_some(),
    }
}

/// Per-replication statistics in first-appearance order of scenarios, then
/// by replication index.
pub fn replication_stats(rows: &[MetricsRow]) -> Vec<ReplicationStats> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.scenario.as_str()) {
            order.push(&r.scenario);
        }
    }
    let mut out = Vec::new();
    for label in order {
        let mut reps: Vec<usize> = rows
            .iter()
            .filter(|r| r.scenario == label)
            .map(|r| r.replication)
            .collect();
        reps.sort_unstable();
        reps.dedup();
        for rep in reps {
            let mut days: Vec<&MetricsRow> = rows
                .iter()
                .filter(|r| r.scenario == label && r.replication == rep)
                .collect();
            days.sort_by_key(|r| r.day);
            out.push(stats_for(&days));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub replications: usize,
    pub ridership_mean: f64,
    pub ridership_min: f64,
    pub ridership_max: f64,
    pub mean_wait_min: f64,
    pub mean_wait_min_min: f64,
    pub mean_wait_min_max: f64,
    pub final_fleet_mean: f64,
    pub fleet_variance_mean: f64,
    pub profit_mean: f64,
    pub consumer_surplus_mean: f64,
    pub converged_replications: usize,
    pub ridership_delta_pct: Option<f64>,
    pub wait_delta_pct: Option<f64>,
    pub consumer_surplus_delta_pct: Option<f64>,
}

fn round(x: f64, digits: i32) -> f64 {
    let p = 10f64.powi(digits);
    let r = (x * p).round() / p;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn pct(value: f64, base: f64) -> Option<f64> {
    (base != 0.0).then(|| round(100.0 * (value - base) / base.abs(), 2))
}

pub fn summarize_rows(rows: &[MetricsRow]) -> Result<Vec<SummaryRow>, CliError> {
    if rows.is_empty() {
        return Err(CliError::Input("no metrics rows to summarize".into()));
    }
    let stats = replication_stats(rows);
    let mut labels: Vec<&str> = Vec::new();
    for s in &stats {
        if !labels.contains(&s.scenario.as_str()) {
            labels.push(&s.scenario);
        }
    }
    let mut summary: Vec<SummaryRow> = labels
        .iter()
        .map(|&label| {
            let group: Vec<&ReplicationStats> = stats.iter().filter(|s| s.scenario == label).collect();
            let rider: Vec<f64> = group.iter().map(|s| s.ridership).collect();
            let wait: Vec<f64> = group.iter().map(|s| s.mean_wait_s / 60.0).collect();
            let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            SummaryRow {
                scenario: label.to_string(),
                replications: group.len(),
                ridership_mean: round(mean(rider.iter().copied()), 4),
                ridership_min: round(min(&rider), 4),
                ridership_max: round(max(&rider), 4),
                mean_wait_min: round(mean(wait.iter().copied()), 4),
                mean_wait_min_min: round(min(&wait), 4),
                mean_wait_min_max: round(max(&wait), 4),
                final_fleet_mean: round(mean(group.iter().map(|s| s.final_fleet as f64)), 4),
                fleet_variance_mean: round(mean(group.iter().map(|s| s.fleet_variance)), 4),
                profit_mean: round(mean(group.iter().map(|s| s.profit)), 2),
                consumer_surplus_mean: round(mean(group.iter().map(|s| s.consumer_surplus)), 2),
                converged_replications: group.iter().filter(|s| s.converged).count(),
                ridership_delta_pct: None,
                wait_delta_pct: None,
                consumer_surplus_delta_pct: None,
            }
        })
        .collect();
    if let Some(base) = summary.iter().find(|r| r.scenario == BASELINE).cloned() {
        for r in &mut summary {
            r.ridership_delta_pct = pct(r.ridership_mean, base.ridership_mean);
            r.wait_delta_pct = pct(r.mean_wait_min, base.mean_wait_min);
            r.consumer_surplus_delta_pct = pct(r.consumer_surplus_mean, base.consumer_surplus_mean);
        }
    }
    Ok(summary)
}

pub fn to_csv(rows: &[SummaryRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Runtime(e.to_string()))
}
