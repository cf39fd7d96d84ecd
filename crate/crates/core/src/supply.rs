//! Fares, operating costs and the day-to-day fleet-size rules.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SupplyError {
    #[error("invalid fare schedule: {0}")]
    InvalidFare(&'static str),
    #[error("invalid operator policy: {0}")]
    InvalidPolicy(&'static str),
}

/// Money in whole cents. All fare accounting is done in this unit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cents(pub i64);

impl Cents {
    pub fn dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub fn from_dollars(d: f64) -> Cents {
        Cents((d * 100.0).round() as i64)
    }
}

impl std::ops::Add for Cents {
    type Output = Cents;
    fn add(self, o: Cents) -> Cents {
        Cents(self.0 + o.0)
    }
}

impl std::ops::AddAssign for Cents {
    fn add_assign(&mut self, o: Cents) {
        self.0 += o.0;
    }
}

impl std::iter::Sum for Cents {
    fn sum<I: Iterator<Item = Cents>>(iter: I) -> Cents {
        Cents(iter.map(|c| c.0).sum())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FareSchedule {
    pub base_fare: f64,
    pub increment_fare: f64,
    #[serde(rename = "increment_distance_m")]
    pub increment_distance: f64,
    pub discount_pct: f64,
}

impl Default for FareSchedule {
    fn default() -> Self {
        FareSchedule {
            base_fare: 4.25,
            increment_fare: 0.25,
            increment_distance: 130.0,
            discount_pct: 0.0,
        }
    }
}

impl FareSchedule {
    pub fn validate(&self) -> Result<(), SupplyError> {
        if !(self.base_fare >= 0.0 && self.increment_fare >= 0.0) {
            return Err(SupplyError::InvalidFare("fares must be nonnegative"));
        }
        if !(self.increment_distance > 0.0) {
            return Err(SupplyError::InvalidFare("increment distance must be positive"));
        }
        if !(0.0..100.0).contains(&self.discount_pct) {
            return Err(SupplyError::InvalidFare("discount must lie in [0, 100)"));
        }
        Ok(())
    }

    /// Metered fare in cents. The base fare covers the first increment; each
    /// started increment after that adds `increment_fare`. The sharing discount
    /// applies only when `shared` and is rounded to the nearest cent.
    pub fn fare_cents(&self, distance: f64, shared: bool) -> Cents {
        let over = (distance - self.increment_distance) / self.increment_distance;
        // Absorb float noise from summed link lengths before taking the ceiling.
        let steps = if over > 1e-9 { (over - 1e-9).ceil() } else { 0.0 };
        let raw = (self.base_fare * 100.0).round() + steps * (self.increment_fare * 100.0).round();
        let cents = if shared && self.discount_pct > 0.0 {
            (raw * (1.0 - self.discount_pct / 100.0)).round()
        } else {
            raw
        };
        Cents(cents as i64)
    }
}

/// Fare in dollars for a trip of `distance` meters.
pub fn fare(distance: f64, shared_day: bool, sched: &FareSchedule) -> f64 {
    sched.fare_cents(distance, shared_day).dollars()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub operating_cost_per_km: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            operating_cost_per_km: 0.51,
        }
    }
}

impl CostModel {
    pub fn operating_cost(&self, distance_m: f64) -> f64 {
        self.operating_cost_per_km * distance_m / 1000.0
    }
}

pub fn driver_day_profit(revenue: f64, distance_driven: f64, cm: &CostModel) -> f64 {
    revenue - cm.operating_cost(distance_driven)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FleetKind {
    /// Crowdsourced human drivers entering on perceived profit.
    HdvCrowdsourced,
    /// Centrally operated autonomous fleet sized from yesterday's demand.
    AvCentral,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorPolicy {
    pub kind: FleetKind,
    pub max_fleet: usize,
    pub capacity: usize,
    pub profit_threshold: f64,
    pub commission_rate: f64,
    /// Lower clamp of the AV sizing rule. 1 by default, 0 for the literal rule.
    pub fleet_floor: usize,
}

impl OperatorPolicy {
    pub fn validate(&self) -> Result<(), SupplyError> {
        if self.capacity == 0 {
            return Err(SupplyError::InvalidPolicy("capacity must be at least 1"));
        }
        if self.fleet_floor > self.max_fleet {
            return Err(SupplyError::InvalidPolicy("fleet floor exceeds maximum fleet"));
        }
        if !(0.0..=1.0).contains(&self.commission_rate) {
            return Err(SupplyError::InvalidPolicy("commission rate must lie in [0, 1]"));
        }
        if !self.profit_threshold.is_finite() {
            return Err(SupplyError::InvalidPolicy("profit threshold must be finite"));
        }
        Ok(())
    }
}

/// AV fleet for the next day from the previous day's realized demand:
/// `min(M, max(floor, ceil(theta / capacity)))`.
pub fn av_fleet_size(theta_prev: usize, policy: &OperatorPolicy) -> usize {
    theta_prev
        .div_ceil(policy.capacity)
        .max(policy.fleet_floor)
        .min(policy.max_fleet)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverAgent {
    pub id: u32,
    pub perceived_profit: f64,
    pub active_today: bool,
    pub lambda: f64,
}

/// Advance every driver's profit belief by one day and pick tomorrow's
/// active drivers.
///
/// `realized` holds `(driver id, profit)` for today's active drivers. Inactive
/// drivers learn from the mean of those profits; with nobody active they have
/// nothing to observe and keep their belief. Returns tomorrow's active ids,
/// sorted, at most `max_fleet` of them (highest belief first, then lowest id).
pub fn hdv_update(
    drivers: &mut [DriverAgent],
    realized: &[(u32, f64)],
    threshold: f64,
    max_fleet: usize,
) -> Vec<u32> {
    let market = if realized.is_empty() {
        None
    } else {
        Some(realized.iter().map(|(_, p)| p).sum::<f64>() / realized.len() as f64)
    };
    for d in drivers.iter_mut() {
        let own = realized.iter().find(|(id, _)| *id == d.id).map(|&(_, p)| p);
        let signal = if d.active_today { own.or(market) } else { market };
        if let Some(obs) = signal {
            d.perceived_profit = (1.0 - d.lambda) * d.perceived_profit + d.lambda * obs;
        }
    }
    let mut willing: Vec<&DriverAgent> = drivers
        .iter()
        .filter(|d| d.perceived_profit >= threshold)
        .collect();
    willing.sort_by(|a, b| {
        b.perceived_profit
            .total_cmp(&a.perceived_profit)
            .then(a.id.cmp(&b.id))
    });
    let mut active: Vec<u32> = willing.iter().take(max_fleet).map(|d| d.id).collect();
    active.sort_unstable();
    for d in drivers.iter_mut() {
        d.active_today = active.binary_search(&d.id).is_ok();
    }
    active
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ownership {
    /// Operator owns the vehicles and bears their operating cost.
    Owned,
    /// Operator only keeps a commission on fares.
    Outsourced,
}

pub fn operator_profit(
    revenues: &[f64],
    distances: &[f64],
    cm: &CostModel,
    ownership: Ownership,
    commission_rate: f64,
) -> f64 {
    let revenue: f64 = revenues.iter().sum();
    match ownership {
        Ownership::Owned => revenue - cm.operating_cost(distances.iter().sum()),
        Ownership::Outsourced => commission_rate * revenue,
    }
}
