//! Dynamic dial-a-ride dispatcher.
//!
//! Every vehicle holds a [`Tour`] of remaining stops. When a request arrives it
//! is inserted, without rejection, into the (vehicle, tour) pair that minimizes
//! the marginal cost `C(v, new) - C(v, old)` where
//!
//! ```text
//! C(v, tour) = gamma * T + (1 - gamma) * (kappa * T^2 + sum_c S_c)
//! ```
//!
//! `T` is the time needed to finish all customer stops (the return leg to the
//! depot is excluded) and `S_c` is the projected dropoff time of customer `c`
//! minus its request time, summed over every customer still assigned to `v`.
//!
//! Vehicles only commit to the next intersection. Tour edits made while a
//! vehicle is on a link take effect when it reaches the link's end node.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{NetworkError, NodeId, RoadNetwork};

pub type RequestId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("infeasible tour {0}")]
    InfeasibleTour(Tour),
    #[error("request {0} is not in the request table")]
    UnknownRequest(RequestId),
    #[error("request {0} already exists")]
    DuplicateRequest(RequestId),
    #[error("request ids must be positive")]
    ZeroRequestId,
    #[error("request {0} has identical origin and destination")]
    DegenerateRequest(RequestId),
    #[error("no vehicle available")]
    EmptyFleet,
    #[error("invalid dispatch config: {0}")]
    InvalidConfig(&'static str),
    #[error("cannot parse tour: {0}")]
    Parse(String),
    #[error("vehicle {0} would exceed its capacity")]
    CapacityViolation(VehicleId),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub origin: NodeId,
    pub destination: NodeId,
    pub request_time: f64,
}

/// Request lookup by id. Ids are small dense positive integers within a day.
#[derive(Clone, Debug, Default)]
pub struct RequestTable {
    slots: Vec<Option<Request>>,
    len: usize,
}

impl RequestTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, req: Request) -> Result<(), DispatchError> {
        if req.id == 0 {
            return Err(DispatchError::ZeroRequestId);
        }
        if req.origin == req.destination {
            return Err(DispatchError::DegenerateRequest(req.id));
        }
        let i = req.id as usize;
        if self.slots.len() <= i {
            self.slots.resize(i + 1, None);
        }
        if self.slots[i].is_some() {
            return Err(DispatchError::DuplicateRequest(req.id));
        }
        self.slots[i] = Some(req);
        self.len += 1;
        Ok(())
    }

    pub fn get(&self, id: RequestId) -> Result<&Request, DispatchError> {
        self.slots
            .get(id as usize)
            .and_then(Option::as_ref)
            .ok_or(DispatchError::UnknownRequest(id))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Request> {
        self.slots.iter().flatten()
    }
}

/// One tour entry: positive ids are pickups, negative ids dropoffs, 0 the depot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stop {
    Pickup(RequestId),
    Dropoff(RequestId),
    Depot,
}

impl Stop {
    pub fn from_signed(v: i64) -> Result<Stop, DispatchError> {
        let id = RequestId::try_from(v.unsigned_abs())
            .map_err(|_| DispatchError::Parse(format!("stop {v} out of range")))?;
        Ok(match v.signum() {
            1 => Stop::Pickup(id),
            -1 => Stop::Dropoff(id),
            _ => Stop::Depot,
        })
    }

    pub fn signed(self) -> i64 {
        match self {
            Stop::Pickup(r) => r as i64,
            Stop::Dropoff(r) => -(r as i64),
            Stop::Depot => 0,
        }
    }

    pub fn request(self) -> Option<RequestId> {
        match self {
            Stop::Pickup(r) | Stop::Dropoff(r) => Some(r),
            Stop::Depot => None,
        }
    }

    /// Node where this stop is served.
    pub fn node(self, net: &RoadNetwork, requests: &RequestTable) -> Result<NodeId, DispatchError> {
        Ok(match self {
            Stop::Pickup(r) => requests.get(r)?.origin,
            Stop::Dropoff(r) => requests.get(r)?.destination,
            Stop::Depot => net.depot(),
        })
    }
}

/// Ordered list of remaining stops, terminated by the depot.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Tour {
    stops: Vec<Stop>,
}

impl Default for Tour {
    fn default() -> Self {
        Self::idle()
    }
}

impl Tour {
    /// `{0}`: nothing left to do but return to the depot.
    pub fn idle() -> Self {
        Tour {
            stops: vec![Stop::Depot],
        }
    }

    pub fn from_stops(stops: Vec<Stop>) -> Self {
        Tour { stops }
    }

    pub fn from_signed(values: &[i64]) -> Result<Self, DispatchError> {
        values
            .iter()
            .map(|&v| Stop::from_signed(v))
            .collect::<Result<Vec<_>, _>>()
            .map(Tour::from_stops)
    }

    pub fn stops(&self) -> &[Stop] {
        &self.stops
    }

    pub fn signed(&self) -> Vec<i64> {
        self.stops.iter().map(|s| s.signed()).collect()
    }

    pub fn len(&self) -> usize {
        self.stops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stops.is_empty()
    }

    /// True when only the depot stop remains.
    pub fn is_idle(&self) -> bool {
        self.stops.iter().all(|s| *s == Stop::Depot)
    }

    pub fn contains_request(&self, id: RequestId) -> bool {
        self.stops.iter().any(|s| s.request() == Some(id))
    }

    fn pop_front(&mut self) -> Stop {
        self.stops.remove(0)
    }
}

impl fmt::Display for Tour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, s) in self.stops.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", s.signed())?;
        }
        f.write_str("}")
    }
}

impl FromStr for Tour {
    type Err = DispatchError;

    /// Parses `{1 2 -2 0}`, braces and commas optional.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let values = s
            .trim()
            .trim_start_matches('{')
            .trim_end_matches('}')
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.replace('\u{2212}', "-")
                    .parse::<i64>()
                    .map_err(|e| DispatchError::Parse(format!("{t}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Tour::from_signed(&values)
    }
}

/// Precedence, uniqueness and capacity check for a complete tour.
pub fn tour_feasible(tour: &Tour, capacity: usize) -> bool {
    feasible_with_onboard(tour, &[], capacity)
}

/// Same as [`tour_feasible`] for a remaining tour whose vehicle already
/// carries `onboard`. Onboard customers must appear only as dropoffs.
pub fn feasible_with_onboard(tour: &Tour, onboard: &[RequestId], capacity: usize) -> bool {
    let stops = tour.stops();
    match stops.split_last() {
        Some((Stop::Depot, body)) if !body.contains(&Stop::Depot) => {}
        _ => return false,
    }
    if onboard.len() > capacity {
        return false;
    }
    // 0 = unseen, 1 = picked up, 2 = dropped off.
    let mut state: Vec<(RequestId, u8)> = onboard.iter().map(|&r| (r, 1)).collect();
    let mut load = onboard.len();
    for stop in &stops[..stops.len() - 1] {
        match *stop {
            Stop::Pickup(r) => {
                if state.iter().any(|&(x, _)| x == r) {
                    return false;
                }
                state.push((r, 1));
                load += 1;
                if load > capacity {
                    return false;
                }
            }
            Stop::Dropoff(r) => match state.iter_mut().find(|(x, _)| *x == r) {
                Some(entry) if entry.1 == 1 => {
                    entry.1 = 2;
                    load -= 1;
                }
                _ => return false,
            },
            Stop::Depot => return false,
        }
    }
    // Every picked-up customer must also be dropped off.
    state.iter().all(|&(_, s)| s == 2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchConfig {
    pub gamma: f64,
    pub kappa: f64,
    pub capacity: usize,
}

impl Default for DispatchConfig {
    fn default() -> Self {
        DispatchConfig {
            gamma: 0.5,
            kappa: 0.0,
            capacity: 4,
        }
    }
}

impl DispatchConfig {
    pub fn validate(&self) -> Result<(), DispatchError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(DispatchError::InvalidConfig("gamma must lie in [0, 1]"));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(DispatchError::InvalidConfig("kappa must be nonnegative"));
        }
        if self.capacity == 0 {
            return Err(DispatchError::InvalidConfig("capacity must be at least 1"));
        }
        Ok(())
    }

    /// `gamma * T + (1 - gamma) * (kappa * T^2 + sum_s)`.
    pub fn cost(&self, backlog: f64, sojourn_sum: f64) -> f64 {
        self.gamma * backlog
            + (1.0 - self.gamma) * (self.kappa * backlog * backlog + sojourn_sum)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Position {
    AtNode(NodeId),
    /// Travelling `from -> to`, departed at `departed`, reaching `to` at `arrives`.
    OnLink {
        from: NodeId,
        to: NodeId,
        departed: f64,
        arrives: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub capacity: usize,
    pub position: Position,
    pub onboard: Vec<RequestId>,
    pub tour: Tour,
    pub committed_next_node: Option<NodeId>,
    /// Meters driven since the start of the day.
    pub odometer: f64,
}

impl VehicleState {
    /// Vehicle parked at `node` with an idle tour.
    pub fn parked(id: VehicleId, node: NodeId, capacity: usize) -> Self {
        VehicleState {
            id,
            capacity,
            position: Position::AtNode(node),
            onboard: Vec::new(),
            tour: Tour::idle(),
            committed_next_node: None,
            odometer: 0.0,
        }
    }

    /// The first node the vehicle can act from and the earliest time it is there.
    pub fn anchor(&self, now: f64) -> (NodeId, f64) {
        match self.position {
            Position::AtNode(n) => (n, now),
            Position::OnLink { to, arrives, .. } => (to, arrives.max(now)),
        }
    }

    pub fn fraction_traveled(&self, now: f64) -> Option<f64> {
        match self.position {
            Position::AtNode(_) => None,
            Position::OnLink {
                departed, arrives, ..
            } => Some(((now - departed) / (arrives - departed)).clamp(0.0, 1.0)),
        }
    }

    /// Parked with nothing to do.
    pub fn is_idle(&self) -> bool {
        matches!(self.position, Position::AtNode(_))
            && self.committed_next_node.is_none()
            && self.tour.is_idle()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TourSchedule {
    pub pickups: Vec<(RequestId, f64)>,
    pub dropoffs: Vec<(RequestId, f64)>,
    /// Arrival time at the trailing depot stop.
    pub completion_time: f64,
    /// Time from `now` until the last customer stop is served.
    pub backlog: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostBreakdown {
    pub backlog: f64,
    pub sojourns: Vec<(RequestId, f64)>,
    pub total: f64,
}

/// Projected stop times obtained by chaining shortest times from the vehicle's
/// anchor node through each stop in order.
pub fn simulate_tour(
    net: &RoadNetwork,
    v: &VehicleState,
    tour: &Tour,
    now: f64,
    requests: &RequestTable,
) -> Result<TourSchedule, DispatchError> {
    if !feasible_with_onboard(tour, &v.onboard, v.capacity) {
        return Err(DispatchError::InfeasibleTour(tour.clone()));
    }
    let (mut node, mut t) = v.anchor(now);
    let mut sched = TourSchedule {
        pickups: Vec::new(),
        dropoffs: Vec::new(),
        completion_time: t,
        backlog: 0.0,
    };
    let mut last_customer = now;
    for &stop in tour.stops() {
        let at = stop.node(net, requests)?;
        t += net.shortest_time(node, at)?;
        node = at;
        match stop {
            Stop::Pickup(r) => {
                sched.pickups.push((r, t));
                last_customer = t;
            }
            Stop::Dropoff(r) => {
                sched.dropoffs.push((r, t));
                last_customer = t;
            }
            Stop::Depot => sched.completion_time = t,
        }
    }
    sched.backlog = last_customer - now;
    Ok(sched)
}

/// Cost of serving `tour` with vehicle `v`, broken into its terms.
pub fn tour_cost(
    net: &RoadNetwork,
    v: &VehicleState,
    tour: &Tour,
    now: f64,
    cfg: &DispatchConfig,
    requests: &RequestTable,
) -> Result<CostBreakdown, DispatchError> {
    let sched = simulate_tour(net, v, tour, now, requests)?;
    let sojourns = sched
        .dropoffs
        .iter()
        .map(|&(r, t)| Ok((r, t - requests.get(r)?.request_time)))
        .collect::<Result<Vec<_>, DispatchError>>()?;
    let sum: f64 = sojourns.iter().map(|(_, s)| s).sum();
    Ok(CostBreakdown {
        backlog: sched.backlog,
        total: cfg.cost(sched.backlog, sum),
        sojourns,
    })
}

/// Allocation-free cost evaluation over a stop sequence. Accumulates in the
/// same order as [`tour_cost`] so both give bit-identical totals.
fn evaluate<I>(
    net: &RoadNetwork,
    start: (NodeId, f64),
    now: f64,
    stops: I,
    cfg: &DispatchConfig,
    requests: &RequestTable,
) -> Result<f64, DispatchError>
where
    I: IntoIterator<Item = Stop>,
{
    let (mut node, mut t) = start;
    let mut last_customer = now;
    let mut sum = 0.0;
    for stop in stops {
        if stop == Stop::Depot {
            // Nothing after the depot stop contributes to the cost.
            break;
        }
        let at = stop.node(net, requests)?;
        t += net.shortest_time(node, at)?;
        node = at;
        last_customer = t;
        if let Stop::Dropoff(r) = stop {
            sum += t - requests.get(r)?.request_time;
        }
    }
    Ok(cfg.cost(last_customer - now, sum))
}

/// Pickup goes in front of existing stop `pickup_index`, dropoff ends up at
/// `dropoff_index` of the new tour. `pickup_index < dropoff_index`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Insertion {
    pub pickup_index: usize,
    pub dropoff_index: usize,
}

impl Insertion {
    pub fn apply(self, tour: &Tour, req: RequestId) -> Tour {
        let mut stops = Vec::with_capacity(tour.len() + 2);
        stops.extend_from_slice(&tour.stops()[..self.pickup_index]);
        stops.push(Stop::Pickup(req));
        let mid = self.dropoff_index - 1;
        stops.extend_from_slice(&tour.stops()[self.pickup_index..mid]);
        stops.push(Stop::Dropoff(req));
        stops.extend_from_slice(&tour.stops()[mid..]);
        Tour::from_stops(stops)
    }

    fn stops(self, tour: &Tour, req: RequestId) -> impl Iterator<Item = Stop> + '_ {
        let s = tour.stops();
        let mid = self.dropoff_index - 1;
        s[..self.pickup_index]
            .iter()
            .copied()
            .chain(std::iter::once(Stop::Pickup(req)))
            .chain(s[self.pickup_index..mid].iter().copied())
            .chain(std::iter::once(Stop::Dropoff(req)))
            .chain(s[mid..].iter().copied())
    }
}

/// Capacity-feasible insertion positions in lexicographic order.
fn feasible_insertions(
    tour: &Tour,
    onboard: &[RequestId],
    req: RequestId,
    capacity: usize,
) -> Vec<Insertion> {
    if tour.contains_request(req)
        || onboard.contains(&req)
        || !feasible_with_onboard(tour, onboard, capacity)
    {
        return Vec::new();
    }
    let stops = tour.stops();
    let n = stops.len();
    // load_before[k] = passengers aboard when arriving at original stop k.
    let mut load_before = Vec::with_capacity(n);
    let mut load = onboard.len();
    for s in stops {
        load_before.push(load);
        match s {
            Stop::Pickup(_) => load += 1,
            Stop::Dropoff(_) => load -= 1,
            Stop::Depot => {}
        }
    }
    let mut out = Vec::new();
    // The new rider is aboard while original stops i..k-1 are served, where the
    // dropoff is placed before original stop k (k <= n - 1, the depot).
    for i in 0..n {
        let mut peak = 0;
        for k in i..n {
            peak = peak.max(load_before[k]);
            if peak + 1 > capacity {
                break;
            }
            out.push(Insertion {
                pickup_index: i,
                dropoff_index: k + 1,
            });
        }
    }
    out
}

/// All tours obtained by inserting `req`'s pickup and dropoff into `tour`
/// while keeping existing stops in order and the depot last.
pub fn candidate_insertions(tour: &Tour, req: RequestId, capacity: usize) -> Vec<Tour> {
    candidate_insertions_with_onboard(tour, &[], req, capacity)
        .into_iter()
        .map(|(_, t)| t)
        .collect()
}

pub fn candidate_insertions_with_onboard(
    tour: &Tour,
    onboard: &[RequestId],
    req: RequestId,
    capacity: usize,
) -> Vec<(Insertion, Tour)> {
    feasible_insertions(tour, onboard, req, capacity)
        .into_iter()
        .map(|ins| (ins, ins.apply(tour, req)))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub vehicle: VehicleId,
    pub tour: Tour,
    pub insertion: Insertion,
    /// `C(v, new) - C(v, old)` of the chosen pair.
    pub delta_cost: f64,
}

/// Marginal-cost assignment of `req` over every vehicle and insertion.
///
/// `requests` must already contain `req`. Ties go to the lowest vehicle id and
/// then the lexicographically smallest insertion.
pub fn assign(
    fleet: &[VehicleState],
    req: &Request,
    now: f64,
    cfg: &DispatchConfig,
    net: &RoadNetwork,
    requests: &RequestTable,
) -> Result<Assignment, DispatchError> {
    if fleet.is_empty() {
        return Err(DispatchError::EmptyFleet);
    }
    requests.get(req.id)?;
    let mut order: Vec<&VehicleState> = fleet.iter().collect();
    order.sort_by_key(|v| v.id);

    let mut best: Option<(f64, VehicleId, Insertion, &Tour)> = None;
    for v in order {
        let start = v.anchor(now);
        let old = evaluate(net, start, now, v.tour.stops().iter().copied(), cfg, requests)?;
        for ins in feasible_insertions(&v.tour, &v.onboard, req.id, cfg.capacity.min(v.capacity)) {
            let new = evaluate(net, start, now, ins.stops(&v.tour, req.id), cfg, requests)?;
            let delta = new - old;
            if best.as_ref().is_none_or(|b| delta < b.0) {
                best = Some((delta, v.id, ins, &v.tour));
            }
        }
    }
    let (delta_cost, vehicle, insertion, tour) = best.ok_or(DispatchError::EmptyFleet)?;
    Ok(Assignment {
        vehicle,
        tour: insertion.apply(tour, req.id),
        insertion,
        delta_cost,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Assign,
    Pickup,
    Dropoff,
    ArriveNode,
    Idle,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Assign => "assign",
            EventKind::Pickup => "pickup",
            EventKind::Dropoff => "dropoff",
            EventKind::ArriveNode => "arrive_node",
            EventKind::Idle => "idle",
        }
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "assign" => EventKind::Assign,
            "pickup" => EventKind::Pickup,
            "dropoff" => EventKind::Dropoff,
            "arrive_node" => EventKind::ArriveNode,
            "idle" => EventKind::Idle,
            other => return Err(format!("unknown event kind {other}")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleEvent {
    pub time: f64,
    pub vehicle: VehicleId,
    pub kind: EventKind,
    pub request: Option<RequestId>,
    pub node: NodeId,
}

/// Finish the link the vehicle was on, then serve and re-route from the node.
pub fn on_node_arrival(
    net: &RoadNetwork,
    v: &mut VehicleState,
    now: f64,
    requests: &RequestTable,
) -> Result<Vec<VehicleEvent>, DispatchError> {
    let mut events = Vec::new();
    if let Position::OnLink { from, to, .. } = v.position {
        let link = net.link(from, to).ok_or(NetworkError::UnknownNode(to))?;
        v.odometer += link.length;
        v.position = Position::AtNode(to);
        v.committed_next_node = None;
        events.push(VehicleEvent {
            time: now,
            vehicle: v.id,
            kind: EventKind::ArriveNode,
            request: None,
            node: to,
        });
        advance(net, v, now, requests, true, &mut events)?;
    } else {
        advance(net, v, now, requests, false, &mut events)?;
    }
    Ok(events)
}

/// Serve leading stops at the current node and commit to the next hop.
/// Used directly when a parked vehicle receives new work.
pub fn advance(
    net: &RoadNetwork,
    v: &mut VehicleState,
    now: f64,
    requests: &RequestTable,
    just_arrived: bool,
    events: &mut Vec<VehicleEvent>,
) -> Result<(), DispatchError> {
    let Position::AtNode(node) = v.position else {
        // Mid-link: routing decisions wait for the next node.
        return Ok(());
    };
    loop {
        match v.tour.stops().first().copied() {
            Some(Stop::Pickup(r)) if requests.get(r)?.origin == node => {
                if v.onboard.len() >= v.capacity {
                    return Err(DispatchError::CapacityViolation(v.id));
                }
                v.tour.pop_front();
                v.onboard.push(r);
                events.push(VehicleEvent {
                    time: now,
                    vehicle: v.id,
                    kind: EventKind::Pickup,
                    request: Some(r),
                    node,
                });
            }
            Some(Stop::Dropoff(r)) if requests.get(r)?.destination == node => {
                v.tour.pop_front();
                v.onboard.retain(|&x| x != r);
                events.push(VehicleEvent {
                    time: now,
                    vehicle: v.id,
                    kind: EventKind::Dropoff,
                    request: Some(r),
                    node,
                });
            }
            _ => break,
        }
    }
    let target = match v.tour.stops().first() {
        Some(&stop) => stop.node(net, requests)?,
        None => {
            v.tour = Tour::idle();
            net.depot()
        }
    };
    if target == node {
        // Only the depot stop can remain here.
        let was_moving = just_arrived || v.committed_next_node.is_some();
        v.committed_next_node = None;
        if was_moving {
            events.push(VehicleEvent {
                time: now,
                vehicle: v.id,
                kind: EventKind::Idle,
                request: None,
                node,
            });
        }
        return Ok(());
    }
    let next = net.next_hop(node, target)?;
    let tt = net.shortest_time(node, next)?;
    v.committed_next_node = Some(next);
    v.position = Position::OnLink {
        from: node,
        to: next,
        departed: now,
        arrives: now + tt,
    };
    Ok(())
}

/// Replace a vehicle's tour after an assignment. Parked vehicles start moving
/// immediately; moving vehicles keep their committed link.
pub fn apply_assignment(
    net: &RoadNetwork,
    v: &mut VehicleState,
    tour: Tour,
    now: f64,
    requests: &RequestTable,
) -> Result<Vec<VehicleEvent>, DispatchError> {
    if !feasible_with_onboard(&tour, &v.onboard, v.capacity) {
        return Err(DispatchError::InfeasibleTour(tour));
    }
    v.tour = tour;
    let mut events = Vec::new();
    if matches!(v.position, Position::AtNode(_)) {
        advance(net, v, now, requests, false, &mut events)?;
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Link, Node};

    fn t(v: &[i64]) -> Tour {
        Tour::from_signed(v).unwrap()
    }

    /// Bidirectional line 0 - 1 - 2 - ... with the given link times.
    fn line(times: &[f64]) -> RoadNetwork {
        let n = times.len() + 1;
        let nodes = (0..n)
            .map(|i| Node {
                id: NodeId(i as u32),
                x: i as f64,
                y: 0.0,
            })
            .collect();
        let mut links = Vec::new();
        for (i, &tt) in times.iter().enumerate() {
            for (a, b) in [(i, i + 1), (i + 1, i)] {
                links.push(Link {
                    from: NodeId(a as u32),
                    to: NodeId(b as u32),
                    length: tt * 10.0,
                    travel_time: tt,
                });
            }
        }
        RoadNetwork::new(nodes, links, NodeId(0), NodeId(n as u32 - 1)).unwrap()
    }

    fn table(reqs: &[(u32, u32, u32, f64)]) -> RequestTable {
        let mut tab = RequestTable::new();
        for &(id, o, d, rt) in reqs {
            tab.insert(Request {
                id,
                origin: NodeId(o),
                destination: NodeId(d),
                request_time: rt,
            })
            .unwrap();
        }
        tab
    }

    #[test]
    fn example_tour_is_feasible() {
        assert!(tour_feasible(&t(&[1, 2, -2, 3, -1, -3, 0]), 4));
        assert!(tour_feasible(&t(&[1, -1, 2, -2, 0]), 1));
    }

    #[test]
    fn dropoff_before_pickup_is_infeasible() {
        assert!(!tour_feasible(&t(&[-1, 1, 0]), 4));
    }

    #[test]
    fn running_load_respects_capacity() {
        assert!(!tour_feasible(&t(&[1, 2, -1, -2, 0]), 1));
        assert!(tour_feasible(&t(&[1, 2, -1, -2, 0]), 2));
    }

    #[test]
    fn structural_violations_are_infeasible() {
        assert!(!tour_feasible(&t(&[1, -1]), 4), "missing depot");
        assert!(!tour_feasible(&t(&[]), 4));
        assert!(!tour_feasible(&t(&[1, 0, -1, 0]), 4), "depot mid-tour");
        assert!(!tour_feasible(&t(&[1, 1, -1, 0]), 4), "double pickup");
        assert!(!tour_feasible(&t(&[1, -1, -1, 0]), 4), "double dropoff");
        assert!(!tour_feasible(&t(&[1, 0]), 4), "never dropped off");
    }

    #[test]
    fn onboard_customers_only_need_dropoffs() {
        let tour = t(&[-1, 2, -2, 0]);
        assert!(!tour_feasible(&tour, 2));
        assert!(feasible_with_onboard(&tour, &[1], 2));
        assert!(feasible_with_onboard(&tour, &[1], 1));
        assert!(!feasible_with_onboard(&t(&[2, -1, -2, 0]), &[1], 1));
        assert!(!feasible_with_onboard(&t(&[1, -1, 0]), &[1], 2));
    }

    #[test]
    fn tour_text_round_trip() {
        let tour: Tour = "{1 2 -2 3 -1 -3 0}".parse().unwrap();
        assert_eq!(tour.signed(), vec![1, 2, -2, 3, -1, -3, 0]);
        assert_eq!(tour.to_string(), "{1 2 -2 3 -1 -3 0}");
        let unicode: Tour = "{1 \u{2212}1 0}".parse().unwrap();
        assert_eq!(unicode.signed(), vec![1, -1, 0]);
    }

    #[test]
    fn simulate_single_request_from_depot() {
        // depot(0) -240s- origin(1) -360s- destination(2)
        let net = line(&[240.0, 360.0]);
        let reqs = table(&[(1, 1, 2, 0.0)]);
        let v = VehicleState::parked(VehicleId(0), NodeId(0), 4);
        let s = simulate_tour(&net, &v, &t(&[1, -1, 0]), 0.0, &reqs).unwrap();
        assert_eq!(s.pickups, vec![(1, 240.0)]);
        assert_eq!(s.dropoffs, vec![(1, 600.0)]);
        assert_eq!(s.backlog, 600.0);
        assert_eq!(s.completion_time, 1200.0);
    }

    #[test]
    fn empty_tour_has_zero_backlog() {
        let net = line(&[10.0]);
        let v = VehicleState::parked(VehicleId(0), NodeId(0), 4);
        let s = simulate_tour(&net, &v, &Tour::idle(), 5.0, &RequestTable::new()).unwrap();
        assert_eq!(s.backlog, 0.0);
        assert_eq!(s.completion_time, 5.0);
    }

    #[test]
    fn shared_destination_gives_equal_dropoffs() {
        let net = line(&[60.0, 60.0, 60.0]);
        let reqs = table(&[(1, 1, 3, 0.0), (2, 2, 3, 0.0)]);
        let v = VehicleState::parked(VehicleId(0), NodeId(0), 4);
        let s = simulate_tour(&net, &v, &t(&[1, 2, -1, -2, 0]), 0.0, &reqs).unwrap();
        assert_eq!(s.dropoffs[0].1, s.dropoffs[1].1);
        assert_eq!(s.dropoffs[0].1, 180.0);
    }

    #[test]
    fn simulate_rejects_infeasible_tour() {
        let net = line(&[10.0]);
        let reqs = table(&[(1, 0, 1, 0.0)]);
        let v = VehicleState::parked(VehicleId(0), NodeId(0), 4);
        assert!(matches!(
            simulate_tour(&net, &v, &t(&[-1, 1, 0]), 0.0, &reqs),
            Err(DispatchError::InfeasibleTour(_))
        ));
    }

    #[test]
    fn cost_single_request_myopic() {
        let net = line(&[240.0, 360.0]);
        let reqs = table(&[(1, 1, 2, 0.0)]);
        let v = VehicleState::parked(VehicleId(0), NodeId(0), 4);
        let cfg = DispatchConfig {
            gamma: 0.5,
            kappa: 0.0,
            capacity: 4,
        };
        let c = tour_cost(&net, &v, &t(&[1, -1, 0]), 0.0, &cfg, &reqs).unwrap();
        assert_eq!(c.backlog, 600.0);
        assert_eq!(c.sojourns, vec![(1, 600.0)]);
        assert_eq!(c.total, 600.0);
    }

    #[test]
    fn cost_gamma_one_is_backlog() {
        let net = line(&[240.0, 360.0]);
        let reqs = table(&[(1, 1, 2, -1000.0)]);
        let v = VehicleState::parked(VehicleId(0), NodeId(0), 4);
        let cfg = DispatchConfig {
            gamma: 1.0,
            kappa: 0.0,
            capacity: 4,
        };
        let c = tour_cost(&net, &v, &t(&[1, -1, 0]), 0.0, &cfg, &reqs).unwrap();
        assert_eq!(c.total, c.backlog);
    }

    #[test]
    fn cost_non_myopic_term() {
        let cfg = DispatchConfig {
            gamma: 0.5,
            kappa: 0.001,
            capacity: 4,
        };
        assert!((cfg.cost(600.0, 600.0) - 780.0).abs() < 1e-9);
    }

    #[test]
    fn cost_requires_known_requests() {
        let net = line(&[10.0]);
        let v = VehicleState::parked(VehicleId(0), NodeId(0), 4);
        let err = tour_cost(
            &net,
            &v,
            &t(&[7, -7, 0]),
            0.0,
            &DispatchConfig::default(),
            &RequestTable::new(),
        )
        .unwrap_err();
        assert!(matches!(err, DispatchError::UnknownRequest(7)));
    }

    #[test]
    fn insertion_into_idle_tour() {
        let c = candidate_insertions(&Tour::idle(), 5, 4);
        assert_eq!(c, vec![t(&[5, -5, 0])]);
    }

    #[test]
    fn insertion_count_over_three_gaps() {
        let c = candidate_insertions(&t(&[1, -1, 0]), 2, 4);
        let got: Vec<Vec<i64>> = c.iter().map(|t| t.signed()).collect();
        assert_eq!(
            got,
            vec![
                vec![2, -2, 1, -1, 0],
                vec![2, 1, -2, -1, 0],
                vec![2, 1, -1, -2, 0],
                vec![1, 2, -2, -1, 0],
                vec![1, 2, -1, -2, 0],
                vec![1, -1, 2, -2, 0],
            ]
        );
    }

    #[test]
    fn insertion_capacity_filter() {
        let c = candidate_insertions(&t(&[1, -1, 0]), 2, 1);
        let got: Vec<Vec<i64>> = c.iter().map(|t| t.signed()).collect();
        assert_eq!(got, vec![vec![2, -2, 1, -1, 0], vec![1, -1, 2, -2, 0]]);
    }

    #[test]
    fn insertion_skips_known_request() {
        assert!(candidate_insertions(&t(&[1, -1, 0]), 1, 4).is_empty());
    }

    #[test]
    fn assign_single_idle_vehicle() {
        let net = line(&[100.0, 100.0]);
        let reqs = table(&[(1, 1, 2, 0.0)]);
        let fleet = vec![VehicleState::parked(VehicleId(3), NodeId(0), 4)];
        let a = assign(&fleet, reqs.get(1).unwrap(), 0.0, &DispatchConfig::default(), &net, &reqs)
            .unwrap();
        assert_eq!(a.vehicle, VehicleId(3));
        assert_eq!(a.tour.signed(), vec![1, -1, 0]);
    }

    #[test]
    fn assign_prefers_nearer_vehicle() {
        // 0 - 1 - 2 - 3 - 4, request 3 -> 4; vehicle 0 at node 0, vehicle 1 at node 2.
        let net = line(&[100.0; 4]);
        let reqs = table(&[(1, 3, 4, 0.0)]);
        let fleet = vec![
            VehicleState::parked(VehicleId(0), NodeId(0), 4),
            VehicleState::parked(VehicleId(1), NodeId(2), 4),
        ];
        let cfg = DispatchConfig::default();
        // Far vehicle: T = 400, S = 400 -> 400. Near vehicle: T = 200, S = 200 -> 200.
        let a = assign(&fleet, reqs.get(1).unwrap(), 0.0, &cfg, &net, &reqs).unwrap();
        assert_eq!(a.vehicle, VehicleId(1));
        assert_eq!(a.delta_cost, 200.0);
    }

    #[test]
    fn assign_breaks_ties_on_vehicle_id() {
        let net = line(&[100.0, 100.0]);
        let reqs = table(&[(1, 1, 2, 0.0)]);
        let fleet = vec![
            VehicleState::parked(VehicleId(5), NodeId(0), 4),
            VehicleState::parked(VehicleId(2), NodeId(0), 4),
        ];
        let a = assign(&fleet, reqs.get(1).unwrap(), 0.0, &DispatchConfig::default(), &net, &reqs)
            .unwrap();
        assert_eq!(a.vehicle, VehicleId(2));
    }

    #[test]
    fn assign_empty_fleet_errors() {
        let net = line(&[100.0]);
        let reqs = table(&[(1, 0, 1, 0.0)]);
        assert!(matches!(
            assign(&[], reqs.get(1).unwrap(), 0.0, &DispatchConfig::default(), &net, &reqs),
            Err(DispatchError::EmptyFleet)
        ));
    }

    #[test]
    fn parked_vehicle_serves_pickup_at_its_node() {
        let net = line(&[50.0, 50.0]);
        let reqs = table(&[(1, 0, 2, 0.0)]);
        let mut v = VehicleState::parked(VehicleId(0), NodeId(0), 4);
        let ev = apply_assignment(&net, &mut v, t(&[1, -1, 0]), 0.0, &reqs).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, EventKind::Pickup);
        assert_eq!(v.onboard, vec![1]);
        assert_eq!(v.committed_next_node, Some(NodeId(1)));
    }

    #[test]
    fn arrival_runs_dropoff_then_heads_home_then_idles() {
        let net = line(&[50.0, 50.0]);
        let reqs = table(&[(1, 0, 2, 0.0)]);
        let mut v = VehicleState::parked(VehicleId(0), NodeId(0), 4);
        apply_assignment(&net, &mut v, t(&[1, -1, 0]), 0.0, &reqs).unwrap();
        let ev = on_node_arrival(&net, &mut v, 50.0, &reqs).unwrap();
        assert_eq!(ev.len(), 1);
        let ev = on_node_arrival(&net, &mut v, 100.0, &reqs).unwrap();
        let kinds: Vec<_> = ev.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EventKind::ArriveNode, EventKind::Dropoff]);
        assert!(v.onboard.is_empty());
        assert_eq!(v.committed_next_node, Some(NodeId(1)));
        on_node_arrival(&net, &mut v, 150.0, &reqs).unwrap();
        let ev = on_node_arrival(&net, &mut v, 200.0, &reqs).unwrap();
        assert_eq!(ev.last().unwrap().kind, EventKind::Idle);
        assert!(v.is_idle());
        assert_eq!(v.odometer, 200.0 * 10.0);
    }

    #[test]
    fn mid_link_tour_change_waits_for_node() {
        let net = line(&[50.0, 50.0, 50.0]);
        let reqs = table(&[(1, 3, 0, 0.0), (2, 1, 0, 10.0)]);
        let mut v = VehicleState::parked(VehicleId(0), NodeId(0), 4);
        apply_assignment(&net, &mut v, t(&[1, -1, 0]), 0.0, &reqs).unwrap();
        assert_eq!(v.committed_next_node, Some(NodeId(1)));
        let before = v.position;
        apply_assignment(&net, &mut v, t(&[1, 2, -1, -2, 0]), 10.0, &reqs).unwrap();
        assert_eq!(v.position, before);
        assert_eq!(v.committed_next_node, Some(NodeId(1)));
    }
}
