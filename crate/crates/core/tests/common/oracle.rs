//! Brute-force reference for marginal-cost dispatch, written against plain
//! data: a Floyd–Warshall time matrix, explicit stop lists and an exhaustive
//! loop over every pickup/dropoff position pair.

#![allow(dead_code)]

use ftsim::dispatch::{
    DispatchConfig, Position, Request, RequestId, RequestTable, Stop, Tour, VehicleId,
    VehicleState,
};
use ftsim::network::{Link, Node, NodeId, RoadNetwork};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn floyd_warshall(net: &RoadNetwork) -> Vec<Vec<f64>> {
    let n = net.node_count();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for l in net.links() {
        let (a, b) = (l.from.0 as usize, l.to.0 as usize);
        d[a][b] = d[a][b].min(l.travel_time);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Precedence, single visit and capacity check, given riders already aboard.
pub fn feasible(stops: &[Stop], onboard: &[RequestId], capacity: usize) -> bool {
    if stops.last() != Some(&Stop::Depot) || stops[..stops.len() - 1].contains(&Stop::Depot) {
        return false;
    }
    let mut aboard: Vec<RequestId> = onboard.to_vec();
    let mut done: Vec<RequestId> = Vec::new();
    if aboard.len() > capacity {
        return false;
    }
    for s in &stops[..stops.len() - 1] {
        match *s {
            Stop::Pickup(r) => {
                if aboard.contains(&r) || done.contains(&r) {
                    return false;
                }
                aboard.push(r);
                if aboard.len() > capacity {
                    return false;
                }
            }
            Stop::Dropoff(r) => {
                let Some(i) = aboard.iter().position(|&x| x == r) else {
                    return false;
                };
                aboard.remove(i);
                done.push(r);
            }
            Stop::Depot => return false,
        }
    }
    aboard.is_empty()
}

/// `gamma*T + (1-gamma)*(kappa*T^2 + sum S)` with T measured to the last
/// customer stop and S from request time to dropoff.
pub fn cost(
    fw: &[Vec<f64>],
    v: &VehicleState,
    stops: &[Stop],
    now: f64,
    cfg: &DispatchConfig,
    requests: &RequestTable,
) -> f64 {
    let (mut node, mut t) = match v.position {
        Position::AtNode(n) => (n, now),
        Position::OnLink { to, arrives, .. } => (to, arrives.max(now)),
    };
    let mut last = now;
    let mut sojourn = 0.0;
    for s in stops {
        let at = match *s {
            Stop::Pickup(r) => requests.get(r).unwrap().origin,
            Stop::Dropoff(r) => requests.get(r).unwrap().destination,
            Stop::Depot => break,
        };
        t += fw[node.0 as usize][at.0 as usize];
        node = at;
        last = t;
        if let Stop::Dropoff(r) = *s {
            sojourn += t - requests.get(r).unwrap().request_time;
        }
    }
    let backlog = last - now;
    cfg.gamma * backlog + (1.0 - cfg.gamma) * (cfg.kappa * backlog * backlog + sojourn)
}

/// Every way to place `req`'s pickup and dropoff into `tour`, feasible or not.
pub fn all_insertions(tour: &Tour, req: RequestId) -> Vec<Vec<Stop>> {
    let base = tour.stops();
    let mut out = Vec::new();
    for i in 0..base.len() {
        for j in i + 1..=base.len() {
            let mut s = base.to_vec();
            s.insert(i, Stop::Pickup(req));
            s.insert(j, Stop::Dropoff(req));
            out.push(s);
        }
    }
    out
}

/// Minimum marginal cost over all vehicles and feasible insertions.
pub fn best_delta(
    fw: &[Vec<f64>],
    fleet: &[VehicleState],
    req: RequestId,
    now: f64,
    cfg: &DispatchConfig,
    requests: &RequestTable,
) -> f64 {
    let mut best = f64::INFINITY;
    for v in fleet {
        let old = cost(fw, v, v.tour.stops(), now, cfg, requests);
        for stops in all_insertions(&v.tour, req) {
            if feasible(&stops, &v.onboard, v.capacity.min(cfg.capacity)) {
                best = best.min(cost(fw, v, &stops, now, cfg, requests) - old);
            }
        }
    }
    best
}

/// A dispatch problem: network, fleet with pending work, and one new request.
pub struct Instance {
    pub net: RoadNetwork,
    pub fleet: Vec<VehicleState>,
    pub requests: RequestTable,
    pub new_request: Request,
    pub now: f64,
    pub cfg: DispatchConfig,
}

/// Strongly connected random network with `n` nodes.
pub fn random_network<R: Rng>(rng: &mut R, n: usize) -> RoadNetwork {
    let nodes = (0..n)
        .map(|i| Node {
            id: NodeId(i as u32),
            x: rng.gen_range(0.0..1000.0),
            y: rng.gen_range(0.0..1000.0),
        })
        .collect();
    let mut links: Vec<Link> = Vec::new();
    let add = |links: &mut Vec<Link>, a: usize, b: usize, rng: &mut R| {
        if a != b && !links.iter().any(|l| l.from.0 as usize == a && l.to.0 as usize == b) {
            let length = rng.gen_range(50.0..800.0);
            links.push(Link {
                from: NodeId(a as u32),
                to: NodeId(b as u32),
                length,
                travel_time: length / rng.gen_range(5.0..15.0),
            });
        }
    };
    // A directed ring keeps the graph strongly connected.
    let mut ring: Vec<usize> = (0..n).collect();
    ring.shuffle(rng);
    for k in 0..n {
        add(&mut links, ring[k], ring[(k + 1) % n], rng);
    }
    for _ in 0..2 * n {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        add(&mut links, a, b, rng);
    }
    RoadNetwork::new(nodes, links, NodeId(0), NodeId(rng.gen_range(1..n) as u32)).unwrap()
}

fn random_request<R: Rng>(rng: &mut R, id: RequestId, n: usize, now: f64) -> Request {
    let origin = rng.gen_range(0..n);
    let mut destination = rng.gen_range(0..n);
    while destination == origin {
        destination = rng.gen_range(0..n);
    }
    Request {
        id,
        origin: NodeId(origin as u32),
        destination: NodeId(destination as u32),
        request_time: now - rng.gen_range(0.0..600.0),
    }
}

/// Up to `max_vehicles` vehicles sharing up to `max_pending` outstanding
/// requests, some already aboard, plus one new request at `now`.
pub fn random_instance<R: Rng>(rng: &mut R, n: usize, max_vehicles: usize, max_pending: usize) -> Instance {
    let net = random_network(rng, n);
    let now = 1000.0;
    let capacity = rng.gen_range(1..=4);
    let cfg = DispatchConfig {
        gamma: 0.5,
        kappa: if rng.gen_bool(0.5) { 0.0 } else { 0.001 },
        capacity,
    };
    let vehicles = rng.gen_range(1..=max_vehicles);
    let mut fleet: Vec<VehicleState> = (0..vehicles)
        .map(|i| {
            let mut v = VehicleState::parked(VehicleId(i as u32), NodeId(rng.gen_range(0..n) as u32), capacity);
            if rng.gen_bool(0.5) {
                let from = net.links()[rng.gen_range(0..net.links().len())];
                let departed = now - rng.gen_range(0.0..from.travel_time);
                v.position = Position::OnLink {
                    from: from.from,
                    to: from.to,
                    departed,
                    arrives: departed + from.travel_time,
                };
                v.committed_next_node = Some(from.to);
            }
            v
        })
        .collect();
    let mut requests = RequestTable::new();
    let pending = rng.gen_range(0..=max_pending);
    for id in 1..=pending as RequestId {
        let req = random_request(rng, id, n, now);
        requests.insert(req).unwrap();
        let v = &mut fleet[rng.gen_range(0..vehicles)];
        let mut stops: Vec<Stop> = v.tour.stops().to_vec();
        if v.onboard.len() < capacity && rng.gen_bool(0.4) {
            v.onboard.push(id);
            let j = rng.gen_range(0..stops.len());
            stops.insert(j, Stop::Dropoff(id));
        } else {
            let options: Vec<Vec<Stop>> = all_insertions(&v.tour, id)
                .into_iter()
                .filter(|s| feasible(s, &v.onboard, capacity))
                .collect();
            stops = options[rng.gen_range(0..options.len())].clone();
        }
        if !feasible(&stops, &v.onboard, capacity) {
            // Dropping an onboard rider in front overloaded the vehicle; put it first.
            stops.retain(|s| *s != Stop::Dropoff(id));
            stops.insert(0, Stop::Dropoff(id));
        }
        v.tour = Tour::from_stops(stops);
        assert!(feasible(v.tour.stops(), &v.onboard, capacity));
    }
    let new_request = Request {
        request_time: now,
        ..random_request(rng, pending as RequestId + 1, n, now)
    };
    requests.insert(new_request).unwrap();
    Instance {
        net,
        fleet,
        requests,
        new_request,
        now,
        cfg,
    }
}
