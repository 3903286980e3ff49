mod common;

use prt_core::network::{build_city_benchmark, shortest_route, NodeIdx};
use prt_core::routing::{plan, OccupancyView, RoutingConfig, RoutingMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn dijkstra_matches_brute_force_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for g in 0..200 {
        let bad = common::dijkstra_mismatches(&mut rng, 8);
        assert!(bad.is_empty(), "graph {g}: {}", bad.join("\n"));
    }
}

#[test]
fn city_routes_avoid_terminals() {
    let net = build_city_benchmark();
    let terminals: Vec<NodeIdx> = net.station_nodes().into_iter().chain(net.capacitor_nodes()).collect();
    for &a in &terminals {
        for &b in &terminals {
            if a == b {
                continue;
            }
            let r = shortest_route(&net, a, b, |s| net.segment(s).nominal_time()).unwrap();
            r.validate(&net).unwrap();
            for &s in &r.segments[..r.segments.len() - 1] {
                assert!(!net.node(net.segment(s).to).kind.is_terminal());
            }
        }
    }
}

#[test]
fn congestion_moves_dynamic_routes_only() {
    let net = build_city_benchmark();
    let st = net.station_nodes();
    let (a, b) = (st[0], st[st.len() - 1]);
    let mut occ = OccupancyView::empty(&net, 10.0);
    let stat = RoutingConfig::default();
    let dynamic = RoutingConfig {
        mode: RoutingMode::Dynamic,
        gamma: 50.0,
        ..stat
    };
    let free = plan(&net, a, b, &occ, &stat).unwrap();
    assert_eq!(plan(&net, a, b, &occ, &dynamic).unwrap(), free);
    // fill the middle of the free route
    for &s in &free.segments[1..free.segments.len() - 1] {
        occ.counts[s.ix()] = occ.capacity[s.ix()];
    }
    assert_eq!(plan(&net, a, b, &occ, &stat).unwrap(), free);
    let around = plan(&net, a, b, &occ, &dynamic).unwrap();
    around.validate(&net).unwrap();
    assert_ne!(around, free);
}
