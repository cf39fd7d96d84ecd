//! Streaming consistency check of an event log.
//!
//! Feed records in log order; `finish` reports every violation found:
//! requests must be assigned, picked up and dropped off exactly once, in that
//! order, by the same vehicle, with no vehicle over capacity and no clock
//! running backwards within a day.

use std::collections::HashMap;
use std::fmt;

use crate::dispatch::{EventKind, RequestId, VehicleId};
use crate::engine::EventRecord;

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub day: usize,
    pub time_s: f64,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "day {} t={:.3}: {}", self.day, self.time_s, self.message)
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Lifecycle {
    vehicle: Option<VehicleId>,
    assigned: Option<f64>,
    picked: Option<f64>,
    dropped: Option<f64>,
}

#[derive(Debug)]
pub struct EventAudit {
    capacity: usize,
    day: Option<usize>,
    clock: f64,
    requests: HashMap<RequestId, Lifecycle>,
    onboard: HashMap<VehicleId, usize>,
    violations: Vec<Violation>,
    /// Served requests across all days.
    pub served: usize,
    pub events: usize,
}

impl EventAudit {
    pub fn new(capacity: usize) -> Self {
        EventAudit {
            capacity,
            day: None,
            clock: f64::NEG_INFINITY,
            requests: HashMap::new(),
            onboard: HashMap::new(),
            violations: Vec::new(),
            served: 0,
            events: 0,
        }
    }

    fn flag(&mut self, e: &EventRecord, message: String) {
        self.violations.push(Violation {
            day: e.day,
            time_s: e.time_s,
            message,
        });
    }

    fn close_day(&mut self) {
        let Some(day) = self.day else { return };
        let mut open: Vec<RequestId> = self
            .requests
            .iter()
            .filter(|(_, l)| l.dropped.is_none())
            .map(|(&r, _)| r)
            .collect();
        open.sort_unstable();
        for r in open {
            self.violations.push(Violation {
                day,
                time_s: self.clock,
                message: format!("request {r} never dropped off"),
            });
        }
        for (&v, &n) in &self.onboard {
            if n != 0 {
                self.violations.push(Violation {
                    day,
                    time_s: self.clock,
                    message: format!("vehicle {v} ends the day with {n} aboard"),
                });
            }
        }
        self.requests.clear();
        self.onboard.clear();
    }

    pub fn feed(&mut self, e: &EventRecord) {
        self.events += 1;
        if self.day != Some(e.day) {
            if self.day.is_some_and(|d| e.day < d) {
                self.flag(e, format!("day {} follows day {}", e.day, self.day.unwrap_or(0)));
            }
            self.close_day();
            self.day = Some(e.day);
            self.clock = f64::NEG_INFINITY;
        }
        if e.time_s < self.clock {
            self.flag(e, format!("time goes back from {:.3}", self.clock));
        }
        self.clock = self.clock.max(e.time_s);

        let Some(r) = e.request_id else {
            if matches!(e.kind, EventKind::Assign | EventKind::Pickup | EventKind::Dropoff) {
                self.flag(e, format!("{} without a request id", e.kind.as_str()));
            }
            return;
        };
        let life = self.requests.get(&r).copied().unwrap_or_default();
        let mut next = life;
        match e.kind {
            EventKind::Assign => {
                if life.assigned.is_some() {
                    self.flag(e, format!("request {r} assigned twice"));
                }
                next.assigned = Some(e.time_s);
                next.vehicle = Some(e.vehicle_id);
            }
            EventKind::Pickup => {
                match life.assigned {
                    None => self.flag(e, format!("request {r} picked up before assignment")),
                    Some(t) if e.time_s < t => {
                        self.flag(e, format!("request {r} has negative wait"))
                    }
                    _ => {}
                }
                if life.picked.is_some() {
                    self.flag(e, format!("request {r} picked up twice"));
                }
                if life.vehicle != Some(e.vehicle_id) {
                    self.flag(e, format!("request {r} picked up by another vehicle"));
                }
                next.picked = Some(e.time_s);
                let load = self.onboard.entry(e.vehicle_id).or_insert(0);
                *load += 1;
                if *load > self.capacity {
                    let load = *load;
                    self.flag(e, format!("vehicle {} carries {load} > {}", e.vehicle_id, self.capacity));
                }
            }
            EventKind::Dropoff => {
                if life.picked.is_none() {
                    self.flag(e, format!("request {r} dropped off before pickup"));
                }
                if life.dropped.is_some() {
                    self.flag(e, format!("request {r} dropped off twice"));
                }
                if life.vehicle != Some(e.vehicle_id) {
                    self.flag(e, format!("request {r} dropped off by another vehicle"));
                }
                next.dropped = Some(e.time_s);
                self.served += 1;
                let load = self.onboard.entry(e.vehicle_id).or_insert(0);
                if *load == 0 {
                    self.flag(e, format!("vehicle {} drops off while empty", e.vehicle_id));
                } else {
                    *load -= 1;
                }
            }
            EventKind::ArriveNode | EventKind::Idle => {
                self.flag(e, format!("{} carries request {r}", e.kind.as_str()));
            }
        }
        self.requests.insert(r, next);
    }

    pub fn finish(mut self) -> Vec<Violation> {
        self.close_day();
        self.violations
    }
}
