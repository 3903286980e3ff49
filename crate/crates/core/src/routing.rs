//! Static and occupancy-aware route planning.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::network::{shortest_route, Network, NodeIdx, NodeKind, Route, RouteError, SegIdx, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RoutingMode {
    Static,
    Dynamic,
}

impl fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoutingMode::Static => "static",
            RoutingMode::Dynamic => "dynamic",
        })
    }
}

impl FromStr for RoutingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(RoutingMode::Static),
            "dynamic" => Ok(RoutingMode::Dynamic),
            _ => Err(format!("unknown routing mode `{s}` (expected static|dynamic)")),
        }
    }
}

/// Edge cost `alpha*L + beta*L/v + gamma*(count/capacity)*L/v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingConfig {
    pub mode: RoutingMode,
    /// Weight on segment length, s/m.
    pub alpha: f64,
    /// Weight on nominal traversal time.
    pub beta: f64,
    /// Weight on the occupancy-scaled traversal time.
    pub gamma: f64,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            mode: RoutingMode::Static,
            alpha: 0.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error("invalid routing weights: {0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error("vehicle is not in front of a fork")]
    NotAtFork,
}

impl RoutingConfig {
    pub fn validate(&self) -> Result<(), RoutingError> {
        let w = [self.alpha, self.beta, self.gamma];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(RoutingError::InvalidWeights("weights must be finite and >= 0".into()));
        }
        // an empty network must still have strictly positive costs
        if self.alpha == 0.0 && self.beta == 0.0 {
            return Err(RoutingError::InvalidWeights(
                "alpha or beta must be positive so that every segment has a positive cost".into(),
            ));
        }
        Ok(())
    }

    /// Weights actually applied: static mode is pure nominal time.
    pub fn effective(&self) -> (f64, f64, f64) {
        match self.mode {
            RoutingMode::Static => (0.0, 1.0, 0.0),
            RoutingMode::Dynamic => (self.alpha, self.beta, self.gamma),
        }
    }
}

/// Vehicle counts per segment, with capacity `floor(length / s0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyView {
    pub counts: Vec<u32>,
    pub capacity: Vec<u32>,
}

impl OccupancyView {
    pub fn empty(net: &Network, s0: f64) -> Self {
        Self {
            counts: vec![0; net.segment_count()],
            capacity: net
                .segments()
                .iter()
                .map(|s| ((s.length / s0).floor() as u32).max(1))
                .collect(),
        }
    }

    #[inline]
    pub fn ratio(&self, s: SegIdx) -> f64 {
        self.counts[s.ix()] as f64 / self.capacity[s.ix()] as f64
    }
}

pub fn edge_cost(seg: &Segment, occupancy_ratio: f64, cfg: &RoutingConfig) -> f64 {
    let (alpha, beta, gamma) = cfg.effective();
    let t = seg.nominal_time();
    alpha * seg.length + beta * t + gamma * occupancy_ratio * t
}

/// Route between two nodes under the configured edge cost.
pub fn plan(
    net: &Network,
    from: NodeIdx,
    to: NodeIdx,
    occ: &OccupancyView,
    cfg: &RoutingConfig,
) -> Result<Route, RoutingError> {
    Ok(shortest_route(net, from, to, |s| {
        edge_cost(net.segment(s), occ.ratio(s), cfg)
    })?)
}

/// Replaces the part of `route` after the current segment, which must end at
/// a fork, with a fresh plan from that fork. Static mode leaves it untouched.
pub fn replan_at_fork(
    route: &[SegIdx],
    leg: usize,
    net: &Network,
    occ: &OccupancyView,
    cfg: &RoutingConfig,
) -> Result<Vec<SegIdx>, RoutingError> {
    let current = *route.get(leg).ok_or(RoutingError::NotAtFork)?;
    let fork = net.segment(current).to;
    if net.node(fork).kind != NodeKind::Fork {
        return Err(RoutingError::NotAtFork);
    }
    if cfg.mode == RoutingMode::Static || leg + 1 >= route.len() {
        return Ok(route.to_vec());
    }
    let dest = net.segment(*route.last().unwrap()).to;
    let tail = plan(net, fork, dest, occ, cfg)?;
    let mut out = route[..=leg].to_vec();
    out.extend(tail.segments);
    Ok(out)
}
