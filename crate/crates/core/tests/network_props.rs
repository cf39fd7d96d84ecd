mod common;

use ftsim::network::NodeId;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn shortest_times_match_floyd_warshall(net in common::network(12)) {
        let fw = common::floyd_warshall(&net);
        for a in net.node_ids() {
            for b in net.node_ids() {
                let t = net.shortest_time(a, b).unwrap();
                prop_assert!((t - fw[a.0 as usize][b.0 as usize]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn triangle_inequality(net in common::network(10)) {
        let ids: Vec<NodeId> = net.node_ids().collect();
        for &a in &ids {
            for &b in &ids {
                for &c in &ids {
                    let ab = net.shortest_time(a, b).unwrap();
                    let bc = net.shortest_time(b, c).unwrap();
                    let ac = net.shortest_time(a, c).unwrap();
                    prop_assert!(ac <= ab + bc + 1e-9);
                }
            }
        }
    }

    #[test]
    fn next_hop_chain_is_time_minimal(net in common::network(12)) {
        for a in net.node_ids() {
            for b in net.node_ids() {
                let mut at = a;
                let mut time = 0.0;
                let mut length = 0.0;
                let mut steps = 0;
                while at != b {
                    let hop = net.next_hop(at, b).unwrap();
                    let link = net.link(at, hop).expect("next hop is adjacent");
                    time += link.travel_time;
                    length += link.length;
                    at = hop;
                    steps += 1;
                    prop_assert!(steps <= net.node_count());
                }
                prop_assert!((time - net.shortest_time(a, b).unwrap()).abs() < 1e-9);
                prop_assert!((length - net.trip_distance(a, b).unwrap()).abs() < 1e-9);
                let path = net.path(a, b).unwrap();
                prop_assert_eq!(path.first(), Some(&a));
                prop_assert_eq!(path.last(), Some(&b));
            }
        }
    }

    #[test]
    fn identity_queries(net in common::network(8)) {
        for a in net.node_ids() {
            prop_assert_eq!(net.shortest_time(a, a).unwrap(), 0.0);
            prop_assert_eq!(net.trip_distance(a, a).unwrap(), 0.0);
        }
    }
}

#[test]
fn grid_distances_are_manhattan() {
    let net = ftsim::network::RoadNetwork::grid(5, 7, 100.0, 10.0, 3).unwrap();
    for a in net.node_ids() {
        for b in net.node_ids() {
            let (ra, ca) = (a.0 / 7, a.0 % 7);
            let (rb, cb) = (b.0 / 7, b.0 % 7);
            let hops = ra.abs_diff(rb) + ca.abs_diff(cb);
            assert_eq!(net.trip_distance(a, b).unwrap(), 100.0 * hops as f64);
            assert!((net.shortest_time(a, b).unwrap() - 10.0 * hops as f64).abs() < 1e-9);
        }
    }
}

#[test]
fn depot_access_road_adds_one_node() {
    let grid = ftsim::network::RoadNetwork::grid(3, 3, 100.0, 10.0, 0).unwrap();
    let net = grid.with_depot_access(500.0, 10.0).unwrap();
    assert_eq!(net.node_count(), 10);
    assert_eq!(net.depot(), NodeId(9));
    assert_eq!(net.trip_distance(net.depot(), NodeId(0)).unwrap(), 500.0);
    assert_eq!(net.trip_distance(net.depot(), net.station()).unwrap(), 700.0);
    assert_eq!(net.station(), grid.station());
}
