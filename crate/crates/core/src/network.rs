//! Static road graph with precomputed all-pairs routing tables.
//!
//! Travel times are uncongested and fixed at load. Every query (`shortest_time`,
//! `next_hop`, `trip_distance`) is a table lookup into matrices computed once by
//! running Dijkstra towards every target on the reversed graph.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used when comparing path times for tie-breaking.
const TIE_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
    #[serde(rename = "length_m")]
    pub length: f64,
    #[serde(rename = "travel_time_s")]
    pub travel_time: f64,
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("failed to read network file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed network file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("network has no links")]
    NoLinks,
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("duplicate link {0} -> {1}")]
    DuplicateLink(NodeId, NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("link {from} -> {to} has nonpositive or non-finite {what}")]
    NonPositive {
        from: NodeId,
        to: NodeId,
        what: &'static str,
    },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("network is not strongly connected: no path {0} -> {1}")]
    Disconnected(NodeId, NodeId),
    #[error("invalid grid dimensions {rows}x{cols}: both must be at least 2")]
    InvalidDimensions { rows: usize, cols: usize },
    #[error("invalid grid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("next_hop requires distinct nodes, got {0} twice")]
    SameNode(NodeId),
}

/// On-disk JSON layout of a network file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkFile {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub depot: NodeId,
    pub station: NodeId,
}

/// Immutable, validated road network. Cheap to share behind an `Arc`.
#[derive(Clone, Debug)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    links: Vec<Link>,
    index: HashMap<NodeId, usize>,
    /// Outgoing adjacency as (target index, link index), sorted by target NodeId.
    out: Vec<Vec<(usize, usize)>>,
    depot: NodeId,
    station: NodeId,
    // Row-major n x n tables indexed [from * n + to].
    time: Vec<f64>,
    next: Vec<usize>,
    dist: Vec<f64>,
}

impl RoadNetwork {
    /// Validate the parts and precompute routing tables.
    pub fn new(
        nodes: Vec<Node>,
        links: Vec<Link>,
        depot: NodeId,
        station: NodeId,
    ) -> Result<Self, NetworkError> {
        if links.is_empty() {
            return Err(NetworkError::NoLinks);
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                return Err(NetworkError::DuplicateNode(n.id));
            }
        }
        for id in [depot, station] {
            if !index.contains_key(&id) {
                return Err(NetworkError::UnknownNode(id));
            }
        }
        let n = nodes.len();
        let mut out: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut seen = HashSet::with_capacity(links.len());
        for (li, l) in links.iter().enumerate() {
            if l.from == l.to {
                return Err(NetworkError::SelfLoop(l.from));
            }
            let positive = |v: f64| v.is_finite() && v > 0.0;
            if !positive(l.length) {
                return Err(NetworkError::NonPositive {
                    from: l.from,
                    to: l.to,
                    what: "length",
                });
            }
            if !positive(l.travel_time) {
                return Err(NetworkError::NonPositive {
                    from: l.from,
                    to: l.to,
                    what: "travel time",
                });
            }
            let a = *index.get(&l.from).ok_or(NetworkError::UnknownNode(l.from))?;
            let b = *index.get(&l.to).ok_or(NetworkError::UnknownNode(l.to))?;
            if !seen.insert((a, b)) {
                return Err(NetworkError::DuplicateLink(l.from, l.to));
            }
            out[a].push((b, li));
        }
        for adj in &mut out {
            adj.sort_by_key(|&(b, _)| nodes[b].id);
        }

        let mut net = RoadNetwork {
            nodes,
            links,
            index,
            out,
            depot,
            station,
            time: vec![f64::INFINITY; n * n],
            next: vec![usize::MAX; n * n],
            dist: vec![0.0; n * n],
        };
        net.build_tables()?;
        Ok(net)
    }

    pub fn from_file_data(file: NetworkFile) -> Result<Self, NetworkError> {
        Self::new(file.nodes, file.links, file.depot, file.station)
    }

    pub fn to_file_data(&self) -> NetworkFile {
        NetworkFile {
            nodes: self.nodes.clone(),
            links: self.links.clone(),
            depot: self.depot,
            station: self.station,
        }
    }

    fn build_tables(&mut self) -> Result<(), NetworkError> {
        let n = self.nodes.len();
        // Reverse adjacency for "time to target" Dijkstra.
        let mut rev: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (a, adj) in self.out.iter().enumerate() {
            for &(b, li) in adj {
                rev[b].push((a, self.links[li].travel_time));
            }
        }
        let mut to_target = vec![f64::INFINITY; n];
        let mut order: Vec<usize> = Vec::with_capacity(n);
        for t in 0..n {
            dijkstra_into(&rev, t, &mut to_target);
            for a in 0..n {
                if !to_target[a].is_finite() {
                    return Err(NetworkError::Disconnected(self.nodes[a].id, self.nodes[t].id));
                }
                self.time[a * n + t] = to_target[a];
            }
            // Next hops: first out-neighbour (lowest NodeId) on a time-minimal path.
            for a in 0..n {
                if a == t {
                    continue;
                }
                let best = to_target[a];
                let tol = TIE_EPS * best.max(1.0);
                let hop = self.out[a]
                    .iter()
                    .find(|&&(b, li)| self.links[li].travel_time + to_target[b] <= best + tol)
                    .map(|&(b, _)| b)
                    .expect("finite distance implies a tight out-link");
                self.next[a * n + t] = hop;
            }
            // Distances along the next-hop chain, filled nearest-first.
            order.clear();
            order.extend(0..n);
            order.sort_by(|&x, &y| to_target[x].total_cmp(&to_target[y]).then(x.cmp(&y)));
            for &a in &order {
                if a == t {
                    self.dist[a * n + t] = 0.0;
                    continue;
                }
                let b = self.next[a * n + t];
                let len = self.link_between(a, b).length;
                self.dist[a * n + t] = len + self.dist[b * n + t];
            }
        }
        Ok(())
    }

    fn link_between(&self, a: usize, b: usize) -> &Link {
        let li = self.out[a]
            .iter()
            .find(|&&(x, _)| x == b)
            .map(|&(_, li)| li)
            .expect("next hop is always adjacent");
        &self.links[li]
    }

    fn idx(&self, id: NodeId) -> Result<usize, NetworkError> {
        self.index.get(&id).copied().ok_or(NetworkError::UnknownNode(id))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn depot(&self) -> NodeId {
        self.depot
    }

    pub fn station(&self) -> NodeId {
        self.station
    }

    /// Direct link between two adjacent nodes, if any.
    pub fn link(&self, from: NodeId, to: NodeId) -> Option<&Link> {
        let a = self.idx(from).ok()?;
        let b = self.idx(to).ok()?;
        self.out[a]
            .iter()
            .find(|&&(x, _)| x == b)
            .map(|&(_, li)| &self.links[li])
    }

    /// Minimal travel time in seconds from `a` to `b`.
    pub fn shortest_time(&self, a: NodeId, b: NodeId) -> Result<f64, NetworkError> {
        let (i, j) = (self.idx(a)?, self.idx(b)?);
        Ok(self.time[i * self.nodes.len() + j])
    }

    /// First node after `current` on the time-minimal path to `target`. Ties go
    /// to the lowest NodeId.
    pub fn next_hop(&self, current: NodeId, target: NodeId) -> Result<NodeId, NetworkError> {
        let (i, j) = (self.idx(current)?, self.idx(target)?);
        if i == j {
            return Err(NetworkError::SameNode(current));
        }
        Ok(self.nodes[self.next[i * self.nodes.len() + j]].id)
    }

    /// Length in meters of the path traced by repeated `next_hop`.
    pub fn trip_distance(&self, a: NodeId, b: NodeId) -> Result<f64, NetworkError> {
        let (i, j) = (self.idx(a)?, self.idx(b)?);
        Ok(self.dist[i * self.nodes.len() + j])
    }

    /// Full node sequence of the routed path, both endpoints included.
    pub fn path(&self, a: NodeId, b: NodeId) -> Result<Vec<NodeId>, NetworkError> {
        let mut path = vec![a];
        let mut cur = a;
        self.idx(b)?;
        while cur != b {
            cur = self.next_hop(cur, b)?;
            path.push(cur);
        }
        Ok(path)
    }

    /// Load and validate a JSON network file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetworkError> {
        let text = std::fs::read_to_string(path)?;
        let file: NetworkFile = serde_json::from_str(&text)?;
        Self::from_file_data(file)
    }

    /// Square-lattice network with bidirectional links between 4-neighbours.
    ///
    /// Node ids are `row * cols + col`. The depot sits at corner node 0 and the
    /// station at the central node. The seed only jitters display coordinates.
    pub fn grid(
        rows: usize,
        cols: usize,
        link_length: f64,
        speed: f64,
        seed: u64,
    ) -> Result<Self, NetworkError> {
        if rows < 2 || cols < 2 {
            return Err(NetworkError::InvalidDimensions { rows, cols });
        }
        if !(link_length.is_finite() && link_length > 0.0) {
            return Err(NetworkError::InvalidParameter("link_length must be positive"));
        }
        if !(speed.is_finite() && speed > 0.0) {
            return Err(NetworkError::InvalidParameter("speed must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jitter = 0.05 * link_length;
        let id = |r: usize, c: usize| NodeId((r * cols + c) as u32);
        let mut nodes = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                nodes.push(Node {
                    id: id(r, c),
                    x: c as f64 * link_length + rng.gen_range(-jitter..=jitter),
                    y: r as f64 * link_length + rng.gen_range(-jitter..=jitter),
                });
            }
        }
        let travel_time = link_length / speed;
        let mut links = Vec::with_capacity(4 * rows * cols);
        let mut both = |a: NodeId, b: NodeId| {
            for (from, to) in [(a, b), (b, a)] {
                links.push(Link {
                    from,
                    to,
                    length: link_length,
                    travel_time,
                });
            }
        };
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    both(id(r, c), id(r, c + 1));
                }
                if r + 1 < rows {
                    both(id(r, c), id(r + 1, c));
                }
            }
        }
        Self::new(nodes, links, id(0, 0), id(rows / 2, cols / 2))
    }
}

impl RoadNetwork {
    /// Move the depot to a new node joined to the current depot by a
    /// two-way access road of `length` metres, like a garage outside town.
    pub fn with_depot_access(&self, length: f64, speed: f64) -> Result<Self, NetworkError> {
        if !(length.is_finite() && length > 0.0 && speed.is_finite() && speed > 0.0) {
            return Err(NetworkError::InvalidParameter(
                "depot access length and speed must be positive",
            ));
        }
        let mut file = self.to_file_data();
        let old = self.nodes[self.idx(self.depot)?];
        let id = NodeId(file.nodes.iter().map(|n| n.id.0).max().unwrap_or(0) + 1);
        let offset = length / std::f64::consts::SQRT_2;
        file.nodes.push(Node {
            id,
            x: old.x - offset,
            y: old.y - offset,
        });
        for (from, to) in [(id, old.id), (old.id, id)] {
            file.links.push(Link {
                from,
                to,
                length,
                travel_time: length / speed,
            });
        }
        file.depot = id;
        Self::from_file_data(file)
    }
}

/// Alias matching the generator operation's name.
pub fn generate_grid(
    rows: usize,
    cols: usize,
    link_length: f64,
    speed: f64,
    seed: u64,
) -> Result<RoadNetwork, NetworkError> {
    RoadNetwork::grid(rows, cols, link_length, speed, seed)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<RoadNetwork, NetworkError> {
    RoadNetwork::load(path)
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra_into(adj: &[Vec<(usize, f64)>], source: usize, dist: &mut [f64]) {
    dist.fill(f64::INFINITY);
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry {
        cost: 0.0,
        node: source,
    });
    while let Some(HeapEntry { cost, node }) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        for &(next, w) in &adj[node] {
            let c = cost + w;
            if c < dist[next] {
                dist[next] = c;
                heap.push(HeapEntry { cost: c, node: next });
            }
        }
    }
}
