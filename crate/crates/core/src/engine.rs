//! Within-day event loop and the day-to-day adjustment loop.
//!
//! A day runs in three steps: travellers' pre-drawn modes are realized at
//! their departure times, fts choosers become dispatch requests, and vehicles
//! advance node by node until every request is delivered and the fleet is back
//! at the depot. Between days travellers update perceptions, the fleet is
//! resized (driver entry/exit or the AV sizing rule) and tomorrow's modes are
//! drawn.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{
    self, calibrate_ascs, choose_mode, AccessModes, DemandError, LevelOfService, Mode, ModeMap,
    PopulationEntry, Traveler, UtilityCoefficients,
};
use crate::dispatch::{
    self, DispatchConfig, DispatchError, EventKind, Request, RequestId, RequestTable,
    VehicleEvent, VehicleId, VehicleState,
};
use crate::network::{NetworkError, NodeId, RoadNetwork};
use crate::supply::{
    av_fleet_size, driver_day_profit, hdv_update, Cents, CostModel, DriverAgent, FareSchedule,
    FleetKind, OperatorPolicy, SupplyError,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid scenario {label}: {reason}")]
    InvalidScenario { label: String, reason: String },
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Supply(#[from] SupplyError),
    #[error("event queue went back in time: {event} < {clock}")]
    ClockRegression { clock: f64, event: f64 },
}

/// One cell of the scenario matrix. Field names follow the scenario table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub label: String,
    pub fleet_kind: FleetKind,
    pub max_fleet: usize,
    pub capacity: usize,
    /// Daily net profit a driver needs to keep driving. Ignored for AVs.
    #[serde(default)]
    pub profit_threshold: f64,
    pub base_fare: f64,
    pub increment_fare: f64,
    #[serde(default = "default_increment_distance")]
    pub increment_distance_m: f64,
    pub discount_pct: f64,
    pub operating_cost_per_km: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "default_days")]
    pub days: usize,
    #[serde(default = "default_commission")]
    pub commission_rate: f64,
    /// Lower clamp of the AV sizing rule.
    #[serde(default = "default_fleet_floor")]
    pub fleet_floor: usize,
    #[serde(default = "default_driver_lambda")]
    pub driver_lambda: f64,
    /// Starting profit belief of every driver; the threshold when absent.
    #[serde(default)]
    pub initial_driver_profit: Option<f64>,
}

fn default_increment_distance() -> f64 {
    130.0
}
fn default_gamma() -> f64 {
    0.5
}
fn default_days() -> usize {
    10
}
fn default_commission() -> f64 {
    0.2
}
fn default_fleet_floor() -> usize {
    1
}
fn default_driver_lambda() -> f64 {
    0.3
}

impl Scenario {
    pub fn fare_schedule(&self) -> FareSchedule {
        FareSchedule {
            base_fare: self.base_fare,
            increment_fare: self.increment_fare,
            increment_distance: self.increment_distance_m,
            discount_pct: self.discount_pct,
        }
    }

    pub fn cost_model(&self) -> CostModel {
        CostModel {
            operating_cost_per_km: self.operating_cost_per_km,
        }
    }

    pub fn policy(&self) -> OperatorPolicy {
        OperatorPolicy {
            kind: self.fleet_kind,
            max_fleet: self.max_fleet,
            capacity: self.capacity,
            profit_threshold: self.profit_threshold,
            commission_rate: self.commission_rate,
            fleet_floor: self.fleet_floor,
        }
    }

    pub fn dispatch_config(&self) -> DispatchConfig {
        DispatchConfig {
            gamma: self.gamma,
            kappa: self.kappa,
            capacity: self.capacity,
        }
    }

    /// Sharing (and with it the posted discount) is offered when seats > 1.
    pub fn offers_sharing(&self) -> bool {
        self.capacity > 1
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |reason: String| EngineError::InvalidScenario {
            label: self.label.clone(),
            reason,
        };
        if self.label.trim().is_empty() {
            return Err(bad("empty label".into()));
        }
        self.fare_schedule().validate().map_err(|e| bad(e.to_string()))?;
        self.policy().validate().map_err(|e| bad(e.to_string()))?;
        self.dispatch_config()
            .validate()
            .map_err(|e| bad(e.to_string()))?;
        if !(self.operating_cost_per_km >= 0.0) {
            return Err(bad("operating cost must be nonnegative".into()));
        }
        if !(self.driver_lambda > 0.0 && self.driver_lambda <= 1.0) {
            return Err(bad("driver learning weight must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCriteria {
    /// Largest allowed day-over-day change of any mode share.
    pub share_epsilon: f64,
    /// Number of trailing days inspected, at least 2.
    pub window: usize,
    /// Largest allowed day-over-day change of fts ridership.
    pub demand_tolerance: f64,
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        ConvergenceCriteria {
            share_epsilon: 0.01,
            window: 5,
            demand_tolerance: 5.0,
        }
    }
}

/// Parameters shared by every scenario of a study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub access: AccessModes,
    /// Coefficients before constant calibration.
    pub coefficients: UtilityCoefficients,
    /// Day-0 mode shares the constants are calibrated to.
    pub target_shares: ModeMap<f64>,
    /// Fare schedule travellers know on day 0.
    pub calibration_fare: FareSchedule,
    pub traveler_lambda: f64,
    pub convergence: ConvergenceCriteria,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            access: AccessModes::default(),
            coefficients: UtilityCoefficients::default(),
            // auto, bus, walk, bike, fts
            target_shares: ModeMap([0.73, 0.19, 0.01, 0.06, 0.01]),
            calibration_fare: FareSchedule::default(),
            traveler_lambda: 0.3,
            convergence: ConvergenceCriteria::default(),
        }
    }
}

/// Network, population and calibrated choice model shared read-only by
/// every run.
#[derive(Clone, Debug)]
pub struct SimulationContext {
    pub network: Arc<RoadNetwork>,
    pub population: Vec<PopulationEntry>,
    /// Day-0 level of service per traveller and mode.
    pub base_los: Vec<ModeMap<LevelOfService>>,
    /// Direct home-to-station distance, the basis of the fts fare.
    pub fts_distance: Vec<f64>,
    pub coefficients: UtilityCoefficients,
    pub params: ModelParams,
}

impl SimulationContext {
    pub fn new(
        network: Arc<RoadNetwork>,
        population: Vec<PopulationEntry>,
        params: ModelParams,
    ) -> Result<Self, EngineError> {
        params.coefficients.validate()?;
        if !(params.traveler_lambda > 0.0 && params.traveler_lambda <= 1.0) {
            return Err(EngineError::InvalidScenario {
                label: "model".into(),
                reason: "traveler learning weight must lie in (0, 1]".into(),
            });
        }
        let file = demand::PopulationFile {
            travelers: population,
        };
        file.validate(&network)?;
        let population = file.travelers;
        let station = network.station();
        let mut base_los = Vec::with_capacity(population.len());
        let mut fts_distance = Vec::with_capacity(population.len());
        for p in &population {
            let d = network.trip_distance(p.home, station)?;
            let fare = params.calibration_fare.fare_cents(d, false).dollars();
            base_los.push(params.access.base_los(&network, p.home, fare)?);
            fts_distance.push(d);
        }
        let coefficients = calibrate_ascs(
            &base_los,
            &params.coefficients,
            &params.target_shares,
            1e-10,
            1000,
        )?;
        Ok(SimulationContext {
            network,
            population,
            base_los,
            fts_distance,
            coefficients,
            params,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayMetrics {
    pub day: usize,
    /// Completed fts dropoffs.
    pub ridership: usize,
    /// Number of waits averaged into `mean_wait_s`.
    pub wait_count: usize,
    /// Mean pickup wait, 0 when nobody rode.
    pub mean_wait_s: f64,
    pub fleet_size: usize,
    /// Fares collected minus operating cost (driver total for HDV fleets).
    pub total_profit: f64,
    /// Fares credited to vehicles at dropoff.
    pub revenue: f64,
    /// Fares paid, summed over riders.
    pub traveler_spend: f64,
    pub operating_cost: f64,
    pub distance_m: f64,
    /// Operator income if rides were outsourced on commission.
    pub commission: f64,
    pub consumer_surplus: f64,
    pub mode_counts: ModeMap<usize>,
    pub shares: ModeMap<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub label: String,
    pub seed: u64,
    pub days: Vec<DayMetrics>,
    pub converged: bool,
    pub convergence_day: Option<usize>,
}

/// One line of the event log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventRecord {
    pub day: usize,
    pub time_s: f64,
    pub vehicle_id: VehicleId,
    pub kind: EventKind,
    pub request_id: Option<RequestId>,
    pub node_id: NodeId,
}

impl EventRecord {
    pub const CSV_HEADER: &'static str = "day,time_s,vehicle_id,event,request_id,node_id";

    fn from_vehicle(day: usize, e: &VehicleEvent) -> Self {
        EventRecord {
            day,
            time_s: e.time,
            vehicle_id: e.vehicle,
            kind: e.kind,
            request_id: e.request,
            node_id: e.node,
        }
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:.3},{},{},{},{}",
            self.day,
            self.time_s,
            self.vehicle_id,
            self.kind.as_str(),
            self.request_id.map(|r| r.to_string()).unwrap_or_default(),
            self.node_id
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 6 {
            return Err(format!("expected 6 fields, got {}", f.len()));
        }
        let err = |e: std::num::ParseIntError| e.to_string();
        Ok(EventRecord {
            day: f[0].parse().map_err(err)?,
            time_s: f[1].parse().map_err(|e: std::num::ParseFloatError| e.to_string())?,
            vehicle_id: VehicleId(f[2].parse().map_err(err)?),
            kind: f[3].parse()?,
            request_id: if f[4].is_empty() {
                None
            } else {
                Some(f[4].parse().map_err(err)?)
            },
            node_id: NodeId(f[5].parse().map_err(err)?),
        })
    }
}

/// Per-vehicle accounting for one day.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleDay {
    pub id: VehicleId,
    pub revenue: Cents,
    pub distance_m: f64,
    pub trips: usize,
    pub profit: f64,
}

/// A delivered fts trip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServedTrip {
    pub traveler: usize,
    pub request: RequestId,
    pub vehicle: VehicleId,
    pub request_time: f64,
    pub pickup_time: f64,
    pub dropoff_time: f64,
    pub fare: Cents,
}

#[derive(Clone, Debug)]
pub struct DayOutcome {
    pub metrics: DayMetrics,
    /// Experienced fts level of service per traveller, `None` if not an fts chooser.
    pub experienced: Vec<Option<LevelOfService>>,
    /// Realized mode per traveller after any fallback.
    pub realized_modes: Vec<Mode>,
    pub vehicles: Vec<VehicleDay>,
    pub trips: Vec<ServedTrip>,
    /// Total the fts riders paid, summed per traveller.
    pub traveler_spend: Cents,
}

impl DayOutcome {
    pub fn fares_collected(&self) -> Cents {
        self.vehicles.iter().map(|v| v.revenue).sum()
    }
}

/// Mutable state of one scenario replication.
pub struct SimulationState {
    pub scenario: Scenario,
    ctx: Arc<SimulationContext>,
    pub travelers: Vec<Traveler>,
    /// Modes drawn for the current day.
    pub planned_modes: Vec<Mode>,
    /// Vehicles in service today, ascending ids.
    pub fleet: Vec<VehicleId>,
    pub drivers: Vec<DriverAgent>,
    /// Posted fts fare per traveller under this scenario.
    fares: Vec<Cents>,
    consumer_surplus: f64,
    rng: ChaCha8Rng,
    pub day: usize,
}

impl SimulationState {
    /// Day-0 state: base-case perceptions, full fleet, day-0 modes drawn.
    pub fn new(
        scenario: Scenario,
        ctx: Arc<SimulationContext>,
        seed: u64,
    ) -> Result<Self, EngineError> {
        scenario.validate()?;
        let net = &ctx.network;
        let travelers: Vec<Traveler> = ctx
            .population
            .iter()
            .zip(&ctx.base_los)
            .enumerate()
            .map(|(i, (p, los))| Traveler {
                id: i as u32,
                home: p.home,
                station: net.station(),
                departure_time: p.departure_time,
                last_mode: None,
                perceived: ModeMap::from_fn(|m| Some(los[m])),
            })
            .collect();
        let sched = scenario.fare_schedule();
        let shared = scenario.offers_sharing();
        let fares = ctx
            .fts_distance
            .iter()
            .map(|&d| sched.fare_cents(d, shared))
            .collect();
        let initial_profit = scenario
            .initial_driver_profit
            .unwrap_or(scenario.profit_threshold);
        let drivers = match scenario.fleet_kind {
            FleetKind::HdvCrowdsourced => (0..scenario.max_fleet as u32)
                .map(|id| DriverAgent {
                    id,
                    perceived_profit: initial_profit,
                    active_today: true,
                    lambda: scenario.driver_lambda,
                })
                .collect(),
            FleetKind::AvCentral => Vec::new(),
        };
        let fleet = (0..scenario.max_fleet as u32).map(VehicleId).collect();
        let mut state = SimulationState {
            scenario,
            travelers,
            planned_modes: Vec::new(),
            fleet,
            drivers,
            fares,
            consumer_surplus: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            day: 0,
            ctx,
        };
        state.draw_choices()?;
        Ok(state)
    }

    pub fn context(&self) -> &SimulationContext {
        &self.ctx
    }

    pub fn posted_fare(&self, traveler: usize) -> Cents {
        self.fares[traveler]
    }

    /// Draw today's modes from current perceptions; fts is unavailable when
    /// the fleet is empty. Also records today's consumer surplus.
    fn draw_choices(&mut self) -> Result<(), EngineError> {
        let coef = self.ctx.coefficients;
        let fts_available = !self.fleet.is_empty();
        let mut modes = Vec::with_capacity(self.travelers.len());
        let mut surplus = 0.0;
        let money = (coef.beta_cost * coef.scale).abs();
        for t in &self.travelers {
            let mut u = ModeMap([0.0; 5]);
            for m in Mode::ALL {
                u[m] = demand::utility(t, m, &coef)?;
            }
            if !fts_available {
                u[Mode::Fts] = f64::NEG_INFINITY;
            }
            modes.push(choose_mode(&u, coef.scale, &mut self.rng)?);
            surplus += demand::logsum(u.values(), coef.scale)? / money;
        }
        self.planned_modes = modes;
        self.consumer_surplus = surplus;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum QueuedKind {
    Departure(usize),
    Arrival(usize),
}

#[derive(Clone, Copy, Debug)]
struct Queued {
    time: f64,
    seq: u64,
    kind: QueuedKind,
}

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Queued {
    fn cmp(&self, o: &Self) -> Ordering {
        self.time.total_cmp(&o.time).then(self.seq.cmp(&o.seq))
    }
}

#[derive(Default)]
struct EventQueue {
    heap: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    clock: f64,
}

impl EventQueue {
    fn push(&mut self, time: f64, kind: QueuedKind) {
        self.seq += 1;
        self.heap.push(Reverse(Queued {
            time,
            seq: self.seq,
            kind,
        }));
    }

    fn pop(&mut self) -> Result<Option<Queued>, EngineError> {
        let Some(Reverse(ev)) = self.heap.pop() else {
            return Ok(None);
        };
        if ev.time < self.clock {
            return Err(EngineError::ClockRegression {
                clock: self.clock,
                event: ev.time,
            });
        }
        self.clock = ev.time;
        Ok(Some(ev))
    }
}

/// Simulate the current day. Event records are passed to `sink` as they happen.
pub fn run_day(
    state: &mut SimulationState,
    sink: &mut dyn FnMut(&EventRecord),
) -> Result<DayOutcome, EngineError> {
    let ctx = Arc::clone(&state.ctx);
    let net: &RoadNetwork = &ctx.network;
    let day = state.day;
    let sc = &state.scenario;
    let cfg = sc.dispatch_config();
    let cost_model = sc.cost_model();
    let n = state.travelers.len();

    let mut vehicles: Vec<VehicleState> = state
        .fleet
        .iter()
        .map(|&id| VehicleState::parked(id, net.depot(), sc.capacity))
        .collect();

    let mut realized_modes = state.planned_modes.clone();
    let mut experienced: Vec<Option<LevelOfService>> = vec![None; n];
    let mut choosers: Vec<usize> = (0..n)
        .filter(|&i| realized_modes[i] == Mode::Fts)
        .collect();
    if vehicles.is_empty() {
        // No service today: fts choosers drive instead and remember a long wait.
        let fallback = ctx.params.access.fts_fallback_wait;
        for &i in &choosers {
            realized_modes[i] = Mode::Auto;
            let prior = state.travelers[i].perceived[Mode::Fts].unwrap_or(ctx.base_los[i][Mode::Fts]);
            experienced[i] = Some(LevelOfService {
                wait: fallback,
                ..prior
            });
        }
        choosers.clear();
    }
    choosers.sort_by(|&a, &b| {
        state.travelers[a]
            .departure_time
            .total_cmp(&state.travelers[b].departure_time)
            .then(a.cmp(&b))
    });

    let mut requests = RequestTable::new();
    let mut queue = EventQueue::default();
    for (k, &i) in choosers.iter().enumerate() {
        queue.push(state.travelers[i].departure_time, QueuedKind::Departure(k));
    }
    queue.clock = choosers
        .first()
        .map(|&i| state.travelers[i].departure_time)
        .unwrap_or(0.0);

    let m = choosers.len();
    let mut pickup = vec![f64::NAN; m];
    let mut dropoff = vec![f64::NAN; m];
    let mut served_by = vec![VehicleId(u32::MAX); m];
    let mut revenue = vec![Cents(0); vehicles.len()];
    let mut trips = vec![0usize; vehicles.len()];
    let vehicle_index = |vehicles: &[VehicleState], id: VehicleId| {
        vehicles
            .iter()
            .position(|v| v.id == id)
            .expect("assigned vehicle is in the fleet")
    };
    let fares = &state.fares;

    let mut handle = |events: &[VehicleEvent],
                      vi: usize,
                      pickup: &mut [f64],
                      dropoff: &mut [f64],
                      served_by: &mut [VehicleId]| {
        for e in events {
            sink(&EventRecord::from_vehicle(day, e));
            if let Some(r) = e.request {
                let k = r as usize - 1;
                match e.kind {
                    EventKind::Pickup => pickup[k] = e.time,
                    EventKind::Dropoff => {
                        dropoff[k] = e.time;
                        served_by[k] = e.vehicle;
                        revenue[vi] += fares[choosers[k]];
                        trips[vi] += 1;
                    }
                    _ => {}
                }
            }
        }
    };

    while let Some(ev) = queue.pop()? {
        let now = ev.time;
        match ev.kind {
            QueuedKind::Departure(k) => {
                let t = &state.travelers[choosers[k]];
                let req = Request {
                    id: k as RequestId + 1,
                    origin: t.home,
                    destination: t.station,
                    request_time: now,
                };
                requests.insert(req)?;
                let a = dispatch::assign(&vehicles, &req, now, &cfg, net, &requests)?;
                let vi = vehicle_index(&vehicles, a.vehicle);
                let assigned = VehicleEvent {
                    time: now,
                    vehicle: a.vehicle,
                    kind: EventKind::Assign,
                    request: Some(req.id),
                    node: req.origin,
                };
                handle(&[assigned], vi, &mut pickup, &mut dropoff, &mut served_by);
                let was_parked = vehicles[vi].is_idle();
                let events = dispatch::apply_assignment(net, &mut vehicles[vi], a.tour, now, &requests)?;
                handle(&events, vi, &mut pickup, &mut dropoff, &mut served_by);
                if was_parked {
                    if let dispatch::Position::OnLink { arrives, .. } = vehicles[vi].position {
                        queue.push(arrives, QueuedKind::Arrival(vi));
                    }
                }
            }
            QueuedKind::Arrival(vi) => {
                let events = dispatch::on_node_arrival(net, &mut vehicles[vi], now, &requests)?;
                handle(&events, vi, &mut pickup, &mut dropoff, &mut served_by);
                if let dispatch::Position::OnLink { arrives, .. } = vehicles[vi].position {
                    queue.push(arrives, QueuedKind::Arrival(vi));
                }
            }
        }
    }

    let mut served = Vec::with_capacity(m);
    let mut traveler_spend = Cents(0);
    let mut wait_sum = 0.0;
    for (k, &i) in choosers.iter().enumerate() {
        let t = &state.travelers[i];
        debug_assert!(!dropoff[k].is_nan(), "every request is delivered");
        let fare = state.fares[i];
        traveler_spend += fare;
        wait_sum += pickup[k] - t.departure_time;
        experienced[i] = Some(LevelOfService {
            wait: pickup[k] - t.departure_time,
            ivt: dropoff[k] - pickup[k],
            cost: fare.dollars(),
        });
        served.push(ServedTrip {
            traveler: i,
            request: k as RequestId + 1,
            vehicle: served_by[k],
            request_time: t.departure_time,
            pickup_time: pickup[k],
            dropoff_time: dropoff[k],
            fare,
        });
    }

    let vehicle_days: Vec<VehicleDay> = vehicles
        .iter()
        .enumerate()
        .map(|(vi, v)| VehicleDay {
            id: v.id,
            revenue: revenue[vi],
            distance_m: v.odometer,
            trips: trips[vi],
            profit: driver_day_profit(revenue[vi].dollars(), v.odometer, &cost_model),
        })
        .collect();

    let mut mode_counts = ModeMap([0usize; 5]);
    for &mode in &realized_modes {
        mode_counts[mode] += 1;
    }
    let shares = ModeMap::from_fn(|mode| mode_counts[mode] as f64 / n.max(1) as f64);
    let revenue_total: Cents = vehicle_days.iter().map(|v| v.revenue).sum();
    let distance_m: f64 = vehicle_days.iter().map(|v| v.distance_m).sum();
    let operating_cost = cost_model.operating_cost(distance_m);
    let metrics = DayMetrics {
        day,
        ridership: served.len(),
        wait_count: served.len(),
        mean_wait_s: if served.is_empty() {
            0.0
        } else {
            wait_sum / served.len() as f64
        },
        fleet_size: vehicles.len(),
        total_profit: revenue_total.dollars() - operating_cost,
        revenue: revenue_total.dollars(),
        traveler_spend: traveler_spend.dollars(),
        operating_cost,
        distance_m,
        commission: sc.commission_rate * revenue_total.dollars(),
        consumer_surplus: state.consumer_surplus,
        mode_counts,
        shares,
    };
    Ok(DayOutcome {
        metrics,
        experienced,
        realized_modes,
        vehicles: vehicle_days,
        trips: served,
        traveler_spend,
    })
}

/// Learning, fleet resizing and next-day mode draws.
pub fn step_day_transition(
    state: &mut SimulationState,
    outcome: &DayOutcome,
) -> Result<(), EngineError> {
    let ctx = Arc::clone(&state.ctx);
    let lambda = ctx.params.traveler_lambda;
    for (i, t) in state.travelers.iter_mut().enumerate() {
        let planned = state.planned_modes[i];
        let (chosen, seen) = match (planned, outcome.experienced[i]) {
            (Mode::Fts, Some(los)) => (Mode::Fts, los),
            (mode, _) => (mode, ctx.base_los[i][mode]),
        };
        let posted = state.fares[i].dollars();
        t.perceived = demand::update_perception(&t.perceived, chosen, seen, lambda, Some(posted));
        t.last_mode = Some(outcome.realized_modes[i]);
    }

    let policy = state.scenario.policy();
    state.fleet = match policy.kind {
        FleetKind::AvCentral => {
            let size = av_fleet_size(outcome.metrics.ridership, &policy);
            (0..size as u32).map(VehicleId).collect()
        }
        FleetKind::HdvCrowdsourced => {
            let realized: Vec<(u32, f64)> =
                outcome.vehicles.iter().map(|v| (v.id.0, v.profit)).collect();
            hdv_update(
                &mut state.drivers,
                &realized,
                policy.profit_threshold,
                policy.max_fleet,
            )
            .into_iter()
            .map(VehicleId)
            .collect()
        }
    };
    state.day += 1;
    state.draw_choices()
}

/// True once every mode share and the fts ridership have stopped moving over
/// the trailing window.
pub fn converged(history: &[DayMetrics], criteria: &ConvergenceCriteria) -> bool {
    if criteria.window < 2 || history.len() < criteria.window {
        return false;
    }
    let tail = &history[history.len() - criteria.window..];
    tail.windows(2).all(|w| {
        let (a, b) = (&w[0], &w[1]);
        let shares_ok = Mode::ALL
            .iter()
            .all(|&m| (b.shares[m] - a.shares[m]).abs() < criteria.share_epsilon);
        let demand_ok =
            (b.ridership as f64 - a.ridership as f64).abs() <= criteria.demand_tolerance;
        shares_ok && demand_ok
    })
}

/// Run day 0 plus `scenario.days` adjusted days.
pub fn run_scenario(
    scenario: &Scenario,
    ctx: Arc<SimulationContext>,
    seed: u64,
    sink: &mut dyn FnMut(&EventRecord),
) -> Result<RunResult, EngineError> {
    let criteria = ctx.params.convergence;
    let mut state = SimulationState::new(scenario.clone(), ctx, seed)?;
    let mut history = Vec::with_capacity(scenario.days + 1);
    let mut convergence_day = None;
    for d in 0..=scenario.days {
        let outcome = run_day(&mut state, sink)?;
        history.push(outcome.metrics.clone());
        if convergence_day.is_none() && converged(&history, &criteria) {
            convergence_day = Some(d);
        }
        if d < scenario.days {
            step_day_transition(&mut state, &outcome)?;
        }
    }
    Ok(RunResult {
        label: scenario.label.clone(),
        seed,
        converged: convergence_day.is_some(),
        convergence_day,
        days: history,
    })
}
