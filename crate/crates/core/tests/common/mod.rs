#![allow(dead_code)]

use prt_core::network::{shortest_route, Network, NetworkBuilder, NodeIdx, NodeKind, SegIdx, SegmentClass};
use rand::seq::SliceRandom;
use rand::Rng;

/// A ring through every node plus random chords. Chords turn plain nodes into
/// forks and joins; a few plain nodes become stations. Draws again until the
/// builder accepts the graph.
pub fn random_network<R: Rng>(rng: &mut R, n: usize) -> Network {
    loop {
        if let Some(net) = try_random_network(rng, n) {
            return net;
        }
    }
}

fn try_random_network<R: Rng>(rng: &mut R, n: usize) -> Option<Network> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (order[i], order[(i + 1) % n])).collect();
    let mut kind = vec![NodeKind::Plain; n];
    for _ in 0..rng.gen_range(0..=n) {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v && kind[u] == NodeKind::Plain && kind[v] == NodeKind::Plain {
            kind[u] = NodeKind::Fork;
            kind[v] = NodeKind::Join;
            edges.push((u, v));
        }
    }
    for k in kind.iter_mut() {
        if *k == NodeKind::Plain && rng.gen_bool(0.3) {
            *k = NodeKind::Station;
        }
    }
    let mut b = NetworkBuilder::new();
    for (i, k) in kind.iter().enumerate() {
        b.node(format!("n{i}"), *k, None);
        if *k == NodeKind::Station {
            b.station(format!("n{i}"), 2);
        }
    }
    edges.shuffle(rng);
    for (i, (u, v)) in edges.iter().enumerate() {
        b.segment(format!("s{i}"), format!("n{u}"), format!("n{v}"), 50.0, SegmentClass::Road, None);
    }
    b.build().ok()
}

/// Exhaustive search over simple paths; ties go to the lexicographically
/// smallest sequence of segment ranks.
pub fn brute_force(net: &Network, from: NodeIdx, to: NodeIdx, cost: &dyn Fn(SegIdx) -> f64) -> Option<(f64, Vec<SegIdx>)> {
    fn walk(
        net: &Network,
        at: NodeIdx,
        to: NodeIdx,
        cost: &dyn Fn(SegIdx) -> f64,
        seen: &mut Vec<bool>,
        path: &mut Vec<SegIdx>,
        best: &mut Option<(f64, Vec<SegIdx>)>,
    ) {
        if at == to {
            let c: f64 = path.iter().map(|&s| cost(s)).sum();
            let ranks = |p: &[SegIdx]| p.iter().map(|&s| net.seg_rank(s)).collect::<Vec<_>>();
            let better = match best {
                None => true,
                Some((bc, bp)) => c < *bc || (c == *bc && ranks(path) < ranks(bp)),
            };
            if better {
                *best = Some((c, path.clone()));
            }
            return;
        }
        if !path.is_empty() && net.node(at).kind.is_terminal() {
            return;
        }
        for &s in net.out_segments(at) {
            let next = net.segment(s).to;
            if seen[next.ix()] {
                continue;
            }
            seen[next.ix()] = true;
            path.push(s);
            walk(net, next, to, cost, seen, path, best);
            path.pop();
            seen[next.ix()] = false;
        }
    }
    let mut seen = vec![false; net.node_count()];
    seen[from.ix()] = true;
    let mut best = None;
    walk(net, from, to, cost, &mut seen, &mut Vec::new(), &mut best);
    best
}

/// Checks every ordered node pair of one random graph; returns mismatches.
pub fn dijkstra_mismatches<R: Rng>(rng: &mut R, max_nodes: usize) -> Vec<String> {
    let n = rng.gen_range(2..=max_nodes);
    let net = random_network(rng, n);
    // integer costs keep path sums exact, so ties are real ties
    let costs: Vec<f64> = (0..net.segment_count()).map(|_| rng.gen_range(1..=4) as f64).collect();
    let cost = |s: SegIdx| costs[s.ix()];
    let mut bad = Vec::new();
    for a in 0..n as u32 {
        for b in 0..n as u32 {
            if a == b {
                continue;
            }
            let (a, b) = (NodeIdx(a), NodeIdx(b));
            let got = shortest_route(&net, a, b, cost).ok().map(|r| (r.cost(cost), r.segments));
            let want = brute_force(&net, a, b, &cost);
            if got != want {
                bad.push(format!("{} -> {}: dijkstra {:?} brute force {:?}", net.node(a).id, net.node(b).id, got, want));
            }
        }
    }
    bad
}

/// Largest gap between the empirical CDF of `xs` and `cdf`.
pub fn ks_statistic(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}
