//! The simulation loop: a fixed-step kinematic update overlaid on an ordered
//! event list for demand and dwell completions.

mod config;
mod world;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::demand::{DemandConfig, DwellSampler, PassengerGroup};
use crate::kinematics::{braking_speed, KinematicsError, MotionLimits};
use crate::merge::{GrantStats, PriorityPolicy};
use crate::metrics::{asd_of, avg_wait, TripRecord};
use crate::network::{build_city_benchmark, parse_network, Network, NetworkError, SegmentClass};
use crate::routing::{RoutingConfig, RoutingError};

pub use config::{apply_setting, parse_config, ConfigError};

/// Where the track network comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetworkSource {
    City,
    File(PathBuf),
}

impl NetworkSource {
    pub fn load(&self) -> Result<Network, SimError> {
        match self {
            NetworkSource::City => Ok(build_city_benchmark()),
            NetworkSource::File(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| SimError::Config(format!("cannot read {}: {e}", p.display())))?;
                Ok(parse_network(&text)?)
            }
        }
    }
}

impl fmt::Display for NetworkSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkSource::City => f.write_str("city"),
            NetworkSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub network: NetworkSource,
    pub n_vehicles: u32,
    pub policy: PriorityPolicy,
    pub routing: RoutingConfig,
    pub demand: DemandConfig,
    pub limits: MotionLimits,
    pub dwell: DwellSampler,
    /// Simulated time, s.
    pub duration: f64,
    /// Trips arriving before this time are not measured, s.
    pub warmup: f64,
    pub sunday_driver_fraction: f64,
    pub sunday_speed_factor: f64,
    /// A vehicle held this long in front of a fork by a blocked next
    /// segment takes the other branch and plans again, s.
    pub detour_after: f64,
    pub seed: u64,
    /// Abort on the first separation or merge violation.
    pub strict: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            network: NetworkSource::City,
            n_vehicles: 240,
            policy: PriorityPolicy::HighwayFirst,
            routing: RoutingConfig::default(),
            demand: DemandConfig::default(),
            limits: MotionLimits::default(),
            dwell: DwellSampler::default(),
            duration: 14_400.0,
            warmup: 1_800.0,
            sunday_driver_fraction: 0.0,
            sunday_speed_factor: 0.5,
            detour_after: 20.0,
            seed: 1,
            strict: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, net: &Network) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.n_vehicles == 0 {
            return bad("at least one vehicle is required");
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad("duration must be positive");
        }
        if !(self.warmup >= 0.0 && self.warmup < self.duration) {
            return bad("warmup must lie in [0, duration)");
        }
        if !(0.0..=1.0).contains(&self.sunday_driver_fraction) {
            return bad("sunday driver fraction must lie in [0, 1]");
        }
        if !(self.sunday_speed_factor > 0.0 && self.sunday_speed_factor <= 1.0) {
            return bad("sunday speed factor must lie in (0, 1]");
        }
        if !(self.detour_after > 0.0) {
            return bad("detour_after must be positive");
        }
        if !(self.demand.groups_per_hour >= 0.0 && self.demand.groups_per_hour.is_finite()) {
            return bad("demand must be a finite rate >= 0");
        }
        self.dwell.validate().map_err(SimError::Config)?;
        self.limits.validate(net.max_vmax())?;
        self.routing.validate()?;
        Ok(())
    }
}

/// Independent random substreams derived from one master seed.
#[derive(Debug, Clone)]
pub struct RngStreams {
    pub demand: ChaCha8Rng,
    pub dwell: ChaCha8Rng,
    pub fleet: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Self {
            demand: stream(1),
            dwell: stream(2),
            fleet: stream(3),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("invariant violated at t={t:.1}s: {message}")]
    Invariant { t: f64, message: String },
    #[error("trace output failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Where every generated group is when the run ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GroupCounts {
    pub generated: usize,
    /// Delivered to the destination.
    pub served: usize,
    /// Boarding or on board.
    pub riding: usize,
    /// A vehicle is on its way.
    pub waiting: usize,
    /// No vehicle assigned yet.
    pub queued: usize,
}

impl GroupCounts {
    pub fn balanced(&self) -> bool {
        self.generated == self.served + self.riding + self.waiting + self.queued
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinStats {
    pub join: String,
    pub classes: [SegmentClass; 2],
    pub grants: GrantStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Every completed trip, by group id.
    pub trips: Vec<TripRecord>,
    pub warmup: f64,
    pub duration: f64,
    /// Over the measured trips.
    pub asd_pct: Option<f64>,
    pub avg_wait_s: Option<f64>,
    pub counts: GroupCounts,
    pub joins: Vec<JoinStats>,
    /// Smallest same-track gap seen at any tick boundary.
    pub min_gap: f64,
    pub separation_violations: u64,
    pub merge_violations: u64,
    /// Vehicles that found their station's berths full on arrival.
    pub berth_overflows: u64,
    /// Vehicles that left their planned route to get around a blocked fork.
    pub detours: u64,
}

impl SimResult {
    /// Trips arriving inside `[warmup, duration]`.
    pub fn measured(&self) -> Vec<TripRecord> {
        self.trips
            .iter()
            .filter(|t| t.t_arrive >= self.warmup && t.t_arrive <= self.duration)
            .cloned()
            .collect()
    }

    pub fn served_measured(&self) -> usize {
        self.trips
            .iter()
            .filter(|t| t.t_arrive >= self.warmup && t.t_arrive <= self.duration)
            .count()
    }

    fn finish(mut self) -> Self {
        let m = self.measured();
        self.asd_pct = asd_of(&m);
        self.avg_wait_s = avg_wait(&m);
        self
    }
}

/// Inputs to the per-tick speed decision of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedContext {
    /// `speed_factor * v_max` of the current segment.
    pub segment_cap: f64,
    /// Distance to the nearest vehicle ahead on the route.
    pub leader_gap: Option<f64>,
    /// Distance to the nearest join the vehicle has not been granted.
    pub merge_distance: Option<f64>,
    /// Caps from slower segments and the route end ahead.
    pub lookahead_cap: f64,
}

/// Minimum over every cap that applies to the vehicle this tick.
pub fn vehicle_allowed_speed(speed: f64, ctx: &SpeedContext, limits: &MotionLimits) -> f64 {
    let mut v = ctx.segment_cap.min(ctx.lookahead_cap);
    if let Some(gap) = ctx.leader_gap {
        v = v.min(braking_speed(gap - limits.s0, 0.0, speed, limits));
    }
    if let Some(d) = ctx.merge_distance {
        v = v.min(braking_speed(d - limits.s0, 0.0, speed, limits));
    }
    v.max(0.0)
}

/// A configured run, optionally with a fixed demand list or a trace sink.
pub struct Simulation<'a> {
    net: &'a Network,
    cfg: SimConfig,
    groups: Option<Vec<PassengerGroup>>,
    trace: Option<Box<dyn Write + 'a>>,
}

impl<'a> Simulation<'a> {
    pub fn new(net: &'a Network, cfg: &SimConfig) -> Self {
        Self {
            net,
            cfg: cfg.clone(),
            groups: None,
            trace: None,
        }
    }

    /// Replaces the generated demand with an explicit list.
    pub fn with_groups(mut self, groups: Vec<PassengerGroup>) -> Self {
        self.groups = Some(groups);
        self
    }

    /// Writes one `t,vehicle,segment,offset,speed,phase` row per moving
    /// vehicle per tick.
    pub fn with_trace(mut self, w: impl Write + 'a) -> Self {
        self.trace = Some(Box::new(w));
        self
    }

    pub fn run(self) -> Result<SimResult, SimError> {
        self.cfg.validate(self.net)?;
        let mut streams = RngStreams::new(self.cfg.seed);
        let groups = match self.groups {
            Some(g) => g,
            None => crate::demand::generate_demand(
                &self.cfg.demand,
                &self.net.station_nodes(),
                self.cfg.duration,
                &mut streams.demand,
            ),
        };
        let mut w = world::World::new(self.net, &self.cfg, groups, streams, self.trace)?;
        w.run()?;
        Ok(w.into_result().finish())
    }
}

pub fn run(net: &Network, cfg: &SimConfig) -> Result<SimResult, SimError> {
    Simulation::new(net, cfg).run()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allowed_speed_examples() {
        let l = MotionLimits::default();
        let free = SpeedContext {
            segment_cap: 10.0,
            leader_gap: None,
            merge_distance: None,
            lookahead_cap: f64::INFINITY,
        };
        assert_eq!(vehicle_allowed_speed(10.0, &free, &l), 10.0);
        let tail = SpeedContext {
            leader_gap: Some(10.0),
            ..free
        };
        assert_eq!(vehicle_allowed_speed(0.0, &tail, &l), 0.0);
        let merge = SpeedContext {
            segment_cap: 15.0,
            merge_distance: Some(110.0),
            ..free
        };
        assert_eq!(vehicle_allowed_speed(15.0, &merge, &l), 15.0);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        use rand::Rng;
        let mut a = RngStreams::new(9);
        let mut b = RngStreams::new(9);
        let xa: Vec<u64> = (0..4).map(|_| a.demand.gen()).collect();
        let xb: Vec<u64> = (0..4).map(|_| b.demand.gen()).collect();
        assert_eq!(xa, xb);
        let d: Vec<u64> = (0..4).map(|_| a.dwell.gen()).collect();
        assert_ne!(xa, d);
    }

    #[test]
    fn config_validation() {
        let net = build_city_benchmark();
        let mut c = SimConfig::default();
        assert!(c.validate(&net).is_ok());
        c.warmup = c.duration;
        assert!(c.validate(&net).is_err());
        c = SimConfig {
            n_vehicles: 0,
            ..SimConfig::default()
        };
        assert!(c.validate(&net).is_err());
        c = SimConfig {
            sunday_driver_fraction: 1.5,
            ..SimConfig::default()
        };
        assert!(c.validate(&net).is_err());
    }
}
