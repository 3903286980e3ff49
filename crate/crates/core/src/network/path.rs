//! Routes, nominal travel time and minimum-cost path search.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use super::{Network, NodeIdx, SegIdx};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub origin: NodeIdx,
    pub dest: NodeIdx,
    pub segments: Vec<SegIdx>,
}

#[derive(Debug, Error, PartialEq)]
pub enum RouteError {
    #[error("route is empty")]
    Empty,
    #[error("route does not leave its origin")]
    BadOrigin,
    #[error("route does not enter its destination")]
    BadDestination,
    #[error("segments {0} and {1} are not consecutive")]
    Disconnected(usize, usize),
    #[error("origin and destination coincide")]
    SameEndpoints,
    #[error("`{to}` is unreachable from `{from}`")]
    Unreachable { from: String, to: String },
    #[error("edge cost {cost} on segment `{segment}` is not positive and finite")]
    InvalidCost { segment: String, cost: f64 },
}

impl Route {
    pub fn validate(&self, net: &Network) -> Result<(), RouteError> {
        let first = self.segments.first().ok_or(RouteError::Empty)?;
        let last = self.segments.last().ok_or(RouteError::Empty)?;
        if net.segment(*first).from != self.origin {
            return Err(RouteError::BadOrigin);
        }
        if net.segment(*last).to != self.dest {
            return Err(RouteError::BadDestination);
        }
        for (k, w) in self.segments.windows(2).enumerate() {
            if net.segment(w[0]).to != net.segment(w[1]).from {
                return Err(RouteError::Disconnected(k, k + 1));
            }
        }
        Ok(())
    }

    pub fn cost(&self, cost_fn: impl Fn(SegIdx) -> f64) -> f64 {
        self.segments.iter().map(|&s| cost_fn(s)).sum()
    }
}

/// Sum of length / v_max over the route; acceleration is not modelled.
pub fn nominal_route_time(net: &Network, route: &Route) -> Result<f64, RouteError> {
    route.validate(net)?;
    Ok(route
        .segments
        .iter()
        .map(|&s| net.segment(s).nominal_time())
        .sum())
}

#[derive(PartialEq)]
struct HeapItem {
    cost: f64,
    node: NodeIdx,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
fn tight(lhs: f64, rhs: f64) -> bool {
    (lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0)
}

/// Minimum-cost route from `origin` to `dest` under `cost_fn`.
///
/// Intermediate nodes are never stations or capacitors. Among equal-cost
/// routes the one whose first differing segment has the smaller id wins.
/// Costs must be positive and finite.
pub fn shortest_route(
    net: &Network,
    origin: NodeIdx,
    dest: NodeIdx,
    cost_fn: impl Fn(SegIdx) -> f64,
) -> Result<Route, RouteError> {
    if origin == dest {
        return Err(RouteError::SameEndpoints);
    }
    let n = net.node_count();
    let mut costs = vec![f64::NAN; net.segment_count()];
    for (i, seg) in net.segments().iter().enumerate() {
        let c = cost_fn(SegIdx(i as u32));
        if !(c.is_finite() && c > 0.0) {
            return Err(RouteError::InvalidCost {
                segment: seg.id.clone(),
                cost: c,
            });
        }
        costs[i] = c;
    }

    // Backward search: dist[v] is the cost from v to dest.
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[dest.ix()] = 0.0;
    heap.push(HeapItem { cost: 0.0, node: dest });
    while let Some(HeapItem { cost, node }) = heap.pop() {
        if done[node.ix()] {
            continue;
        }
        done[node.ix()] = true;
        if node == origin {
            break;
        }
        // a terminal other than dest can only start a path, never relay one
        if node != dest && net.node(node).kind.is_terminal() {
            continue;
        }
        for &s in net.in_segments(node) {
            let from = net.segment(s).from;
            let c = cost + costs[s.ix()];
            if c < dist[from.ix()] {
                dist[from.ix()] = c;
                heap.push(HeapItem { cost: c, node: from });
            }
        }
    }
    if !dist[origin.ix()].is_finite() {
        return Err(RouteError::Unreachable {
            from: net.node(origin).id.clone(),
            to: net.node(dest).id.clone(),
        });
    }

    // Forward walk along tight edges picking the smallest segment id. Costs
    // are positive, so dist strictly decreases and the walk terminates.
    let mut segments = Vec::new();
    let mut at = origin;
    while at != dest {
        let mut best: Option<SegIdx> = None;
        for &s in net.out_segments(at) {
            let to = net.segment(s).to;
            if to != dest && net.node(to).kind.is_terminal() {
                continue;
            }
            if !dist[to.ix()].is_finite() || !done[to.ix()] {
                continue;
            }
            if tight(costs[s.ix()] + dist[to.ix()], dist[at.ix()])
                && best.is_none_or(|b| net.seg_rank(s) < net.seg_rank(b))
            {
                best = Some(s);
            }
        }
        let s = best.expect("a tight edge exists on every finite-distance node");
        segments.push(s);
        at = net.segment(s).to;
    }
    Ok(Route {
        origin,
        dest,
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{NetworkBuilder, NodeKind, SegmentClass};
    use super::*;

    fn triangle() -> Network {
        // a -> b -> c plus a -> c, closed by c -> a
        let mut b = NetworkBuilder::new();
        b.node("a", NodeKind::Fork, None)
            .node("b", NodeKind::Plain, None)
            .node("c", NodeKind::Join, None)
            .node("s", NodeKind::Station, None)
            .node("t", NodeKind::Station, None)
            .segment("ab", "a", "b", 100.0, SegmentClass::Road, None)
            .segment("bc", "b", "c", 100.0, SegmentClass::Road, None)
            .segment("ac", "a", "c", 300.0, SegmentClass::Road, None)
            .segment("cs", "c", "s", 100.0, SegmentClass::Road, None)
            .segment("st", "s", "t", 100.0, SegmentClass::Road, None)
            .segment("ta", "t", "a", 100.0, SegmentClass::Road, None);
        b.build().unwrap()
    }

    #[test]
    fn triangle_prefers_two_hops() {
        let net = triangle();
        let a = net.node_by_id("a").unwrap();
        let c = net.node_by_id("c").unwrap();
        let costs = |s: SegIdx| match net.segment(s).id.as_str() {
            "ab" | "bc" => 1.0,
            "ac" => 3.0,
            _ => 1.0,
        };
        let r = shortest_route(&net, a, c, costs).unwrap();
        let ids: Vec<_> = r.segments.iter().map(|&s| net.segment(s).id.as_str()).collect();
        assert_eq!(ids, ["ab", "bc"]);
        assert_eq!(r.cost(costs), 2.0);
    }

    #[test]
    fn equal_cost_tie_breaks_on_smaller_segment_id() {
        let net = triangle();
        let a = net.node_by_id("a").unwrap();
        let c = net.node_by_id("c").unwrap();
        // both routes cost 2; "ab" < "ac"
        let costs = |s: SegIdx| match net.segment(s).id.as_str() {
            "ac" => 2.0,
            _ => 1.0,
        };
        let r = shortest_route(&net, a, c, costs).unwrap();
        assert_eq!(net.segment(r.segments[0]).id, "ab");
        // make "ac" the lexicographically smaller route by renaming ab away
        let text = super::super::emit_network(&net).replace(" ab ", " zb ");
        let net2 = super::super::parse_network(&text).unwrap();
        let costs2 = |s: SegIdx| match net2.segment(s).id.as_str() {
            "ac" => 2.0,
            _ => 1.0,
        };
        let r = shortest_route(&net2, a, c, costs2).unwrap();
        assert_eq!(net2.segment(r.segments[0]).id, "ac");
    }

    #[test]
    fn unique_chain_and_nominal_time() {
        let net = triangle();
        let t = net.node_by_id("t").unwrap();
        let c = net.node_by_id("c").unwrap();
        let r = shortest_route(&net, t, c, |x| net.segment(x).nominal_time()).unwrap();
        assert_eq!(r.segments.len(), 3);
        assert_eq!(nominal_route_time(&net, &r).unwrap(), 30.0);
    }

    #[test]
    fn never_transits_a_station() {
        let net = triangle();
        let c = net.node_by_id("c").unwrap();
        let t = net.node_by_id("t").unwrap();
        // c -> s -> t passes through station s
        assert!(matches!(
            shortest_route(&net, c, t, |_| 1.0),
            Err(RouteError::Unreachable { .. })
        ));
    }

    #[test]
    fn rejects_bad_costs_and_same_endpoints() {
        let net = triangle();
        let a = net.node_by_id("a").unwrap();
        let c = net.node_by_id("c").unwrap();
        assert!(matches!(
            shortest_route(&net, a, c, |_| 0.0),
            Err(RouteError::InvalidCost { .. })
        ));
        assert_eq!(shortest_route(&net, a, a, |_| 1.0), Err(RouteError::SameEndpoints));
    }

    #[test]
    fn nominal_time_of_mixed_route() {
        let mut b = NetworkBuilder::new();
        b.node("a", NodeKind::Station, None)
            .node("j", NodeKind::Plain, None)
            .node("k", NodeKind::Plain, None)
            .segment("r", "a", "j", 500.0, SegmentClass::Road, None)
            .segment("h", "j", "k", 1500.0, SegmentClass::Highway, None)
            .segment("back", "k", "a", 100.0, SegmentClass::Road, None);
        let net = b.build().unwrap();
        let r = |ids: &[&str], o: &str, d: &str| Route {
            origin: net.node_by_id(o).unwrap(),
            dest: net.node_by_id(d).unwrap(),
            segments: ids.iter().map(|i| net.segment_by_id(i).unwrap()).collect(),
        };
        assert_eq!(nominal_route_time(&net, &r(&["r"], "a", "j")).unwrap(), 50.0);
        assert_eq!(nominal_route_time(&net, &r(&["h"], "j", "k")).unwrap(), 100.0);
        assert_eq!(nominal_route_time(&net, &r(&["r", "h"], "a", "k")).unwrap(), 150.0);
        assert_eq!(
            nominal_route_time(&net, &r(&["h"], "k", "k")),
            Err(RouteError::BadOrigin)
        );
        assert_eq!(
            nominal_route_time(&net, &r(&["r", "back"], "a", "a")),
            Err(RouteError::Disconnected(0, 1))
        );
    }
}
