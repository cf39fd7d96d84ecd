#![allow(dead_code)]

use ftsim::network::{Link, Node, NodeId, RoadNetwork};
use proptest::prelude::*;

/// Random strongly connected network: a two-way spanning tree plus extra
/// one-way links. Lengths in metres, travel times in seconds.
pub fn network(max_nodes: usize) -> impl Strategy<Value = RoadNetwork> {
    (2..=max_nodes)
        .prop_flat_map(|n| {
            let parents: Vec<_> = (1..n).map(|i| 0..i).collect();
            let tree_w = prop::collection::vec((1u32..50, 1u32..50), n - 1);
            let extra = prop::collection::vec((0..n, 0..n, 1u32..50, 1u32..50), 0..2 * n);
            (Just(n), parents, tree_w, extra, 0..n, 0..n)
        })
        .prop_map(|(n, parents, tree_w, extra, depot, station)| {
            let nodes: Vec<Node> = (0..n)
                .map(|i| Node {
                    id: NodeId(i as u32),
                    x: i as f64,
                    y: 0.0,
                })
                .collect();
            let mut links: Vec<Link> = Vec::new();
            let mut add = |a: usize, b: usize, len: u32, tt: u32| {
                if a != b && !links.iter().any(|l| l.from.0 as usize == a && l.to.0 as usize == b) {
                    links.push(Link {
                        from: NodeId(a as u32),
                        to: NodeId(b as u32),
                        length: 10.0 * len as f64,
                        travel_time: tt as f64,
                    });
                }
            };
            for (i, (&p, &(len, tt))) in parents.iter().zip(&tree_w).enumerate() {
                add(i + 1, p, len, tt);
                add(p, i + 1, len, tt);
            }
            for (a, b, len, tt) in extra {
                add(a, b, len, tt);
            }
            RoadNetwork::new(nodes, links, NodeId(depot as u32), NodeId(station as u32))
                .expect("generated network is valid")
        })
}

/// Floyd–Warshall shortest times, independent of the library's Dijkstra.
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
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}
