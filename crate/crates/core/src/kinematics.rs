//! Point-vehicle motion: speed caps, separation-preserving braking and the
//! fixed-step integrator.
//!
//! Vehicles have no length; the minimum separation `s0` absorbs it. Every
//! obstacle (a leader, a merge stop line, a station stop) is treated as a
//! point the vehicle must be able to stop in front of at full braking.

use thiserror::Error;

use crate::network::{Network, SegIdx};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionLimits {
    /// Symmetric acceleration / deceleration bound, m/s².
    pub a_max: f64,
    /// Minimum separation, m.
    pub s0: f64,
    /// Tick length, s.
    pub dt: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        Self {
            a_max: 2.0,
            s0: 10.0,
            dt: 0.1,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("invalid motion limits: {0}")]
    InvalidLimits(String),
    #[error("vehicle {vehicle} ran past the end of its route")]
    RouteExhausted { vehicle: u32 },
}

impl MotionLimits {
    pub fn validate(&self, max_vmax: f64) -> Result<(), KinematicsError> {
        if !(self.a_max > 0.0 && self.a_max.is_finite()) {
            return Err(KinematicsError::InvalidLimits("a_max must be positive".into()));
        }
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(KinematicsError::InvalidLimits("s0 must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(KinematicsError::InvalidLimits("dt must be positive".into()));
        }
        if max_vmax * self.dt >= self.s0 {
            return Err(KinematicsError::InvalidLimits(format!(
                "v_max*dt = {} must stay below s0 = {}",
                max_vmax * self.dt,
                self.s0
            )));
        }
        Ok(())
    }

    /// Distance needed to brake from `v` to a standstill.
    #[inline]
    pub fn stopping_distance(&self, v: f64) -> f64 {
        v * v / (2.0 * self.a_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Idle,
    ToPickup,
    Occupied,
    ToPark,
    Dwell,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::ToPickup => "to_pickup",
            Phase::Occupied => "occupied",
            Phase::ToPark => "to_park",
            Phase::Dwell => "dwell",
        }
    }
}

/// Position and speed of one vehicle on its route.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: u32,
    /// Index into `route` of the segment the vehicle is on.
    pub leg: usize,
    pub offset: f64,
    pub speed: f64,
    pub speed_factor: f64,
    pub route: Vec<SegIdx>,
    pub phase: Phase,
}

impl VehicleState {
    pub fn new(id: u32, route: Vec<SegIdx>, phase: Phase) -> Self {
        Self {
            id,
            leg: 0,
            offset: 0.0,
            speed: 0.0,
            speed_factor: 1.0,
            route,
            phase,
        }
    }

    #[inline]
    pub fn segment(&self) -> SegIdx {
        self.route[self.leg]
    }

    #[inline]
    pub fn on_last_leg(&self) -> bool {
        self.leg + 1 == self.route.len()
    }
}

/// Highest speed from which a vehicle can stop before coming within `s0` of
/// a stopped obstacle `gap` metres ahead.
pub fn safe_follow_speed(gap: f64, limits: &MotionLimits) -> f64 {
    (2.0 * limits.a_max * (gap - limits.s0).max(0.0)).sqrt()
}

/// Largest end-of-tick speed `v'` such that, after moving `(v + v')/2 * dt`,
/// the vehicle can still brake to `v_end` within the remaining `distance`.
///
/// This is the tick-exact form of [`safe_follow_speed`]: with
/// `distance = gap - s0` and `v_end = 0` it keeps the separation invariant at
/// every tick boundary, and it tends to the continuous formula as `dt -> 0`.
/// Whenever `v² <= v_end² + 2 a distance` held at the start of the tick the
/// result is at least `v - a dt`, so the cap is always reachable.
pub fn braking_speed(distance: f64, v_end: f64, v: f64, limits: &MotionLimits) -> f64 {
    let a = limits.a_max;
    let dt = limits.dt;
    let budget = distance + v_end * v_end / (2.0 * a) - v * dt / 2.0;
    if budget <= 0.0 {
        return 0.0;
    }
    let h = a * dt / 2.0;
    (h * h + 2.0 * a * budget).sqrt() - h
}

/// Result of one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepOutcome {
    pub distance: f64,
    /// Number of segment boundaries crossed this tick.
    pub segments_entered: usize,
    /// The vehicle stands at the end node of its route.
    pub reached_end: bool,
}

/// Tolerance for snapping onto the end node of a route.
pub const ARRIVAL_EPS: f64 = 1e-3;

/// Advances a vehicle by one tick towards `allowed` speed.
pub fn step_vehicle(
    state: &mut VehicleState,
    allowed: f64,
    limits: &MotionLimits,
    net: &Network,
) -> Result<StepOutcome, KinematicsError> {
    let v = state.speed;
    let dv = limits.a_max * limits.dt;
    let seg_cap = state.speed_factor * net.segment(state.segment()).v_max;
    let target = allowed.max(0.0).clamp(v - dv, v + dv);
    let v_new = target.clamp(0.0, seg_cap);
    let distance = if v_new == 0.0 && v < dv {
        // full braking stops mid-tick
        limits.stopping_distance(v)
    } else {
        0.5 * (v + v_new) * limits.dt
    };
    state.speed = v_new;
    state.offset += distance;

    let mut out = StepOutcome {
        distance,
        ..StepOutcome::default()
    };
    loop {
        let len = net.segment(state.segment()).length;
        if state.on_last_leg() {
            if state.offset > len + ARRIVAL_EPS {
                return Err(KinematicsError::RouteExhausted { vehicle: state.id });
            }
            if state.offset >= len - ARRIVAL_EPS {
                state.offset = len;
                out.reached_end = true;
            }
            break;
        }
        if state.offset < len {
            break;
        }
        state.offset -= len;
        state.leg += 1;
        out.segments_entered += 1;
    }
    let cap = state.speed_factor * net.segment(state.segment()).v_max;
    if state.speed > cap {
        state.speed = cap;
    }
    Ok(out)
}

/// Time to cover `distance` when accelerating at `a_max` from the current
/// speed up to `cap`, then cruising.
pub fn eta_to_point(speed: f64, distance: f64, cap: f64, limits: &MotionLimits) -> f64 {
    if distance <= 0.0 {
        return 0.0;
    }
    if cap <= 0.0 {
        return f64::INFINITY;
    }
    let a = limits.a_max;
    let v = speed.max(0.0);
    if v >= cap {
        return distance / cap;
    }
    let d_acc = (cap * cap - v * v) / (2.0 * a);
    if distance <= d_acc {
        ((v * v + 2.0 * a * distance).sqrt() - v) / a
    } else {
        (cap - v) / a + (distance - d_acc) / cap
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{NetworkBuilder, NodeKind, SegmentClass};
    use proptest::prelude::*;

    fn lim() -> MotionLimits {
        MotionLimits::default()
    }

    fn line(len: f64, class: SegmentClass) -> Network {
        let mut b = NetworkBuilder::new();
        b.node("a", NodeKind::Station, None)
            .node("b", NodeKind::Station, None)
            .segment("s1", "a", "b", len, SegmentClass::Road, None)
            .segment("s2", "b", "a", len, SegmentClass::Road, None);
        if class == SegmentClass::Highway {
            let mut b = NetworkBuilder::new();
            b.node("a", NodeKind::Station, None)
                .node("p", NodeKind::Plain, None)
                .node("q", NodeKind::Plain, None)
                .node("b", NodeKind::Station, None)
                .segment("s0", "a", "p", 100.0, SegmentClass::Road, None)
                .segment("s1", "p", "q", len, SegmentClass::Highway, None)
                .segment("s2", "q", "b", 100.0, SegmentClass::Road, None)
                .segment("s3", "b", "a", 100.0, SegmentClass::Road, None);
            return b.build().unwrap();
        }
        b.build().unwrap()
    }

    #[test]
    fn follow_speed_examples() {
        assert_eq!(safe_follow_speed(10.0, &lim()), 0.0);
        assert_eq!(safe_follow_speed(110.0, &lim()), 20.0);
        assert_eq!(safe_follow_speed(0.0, &lim()), 0.0);
    }

    #[test]
    fn step_examples() {
        let net = line(500.0, SegmentClass::Road);
        let s1 = net.segment_by_id("s1").unwrap();
        let mut v = VehicleState::new(0, vec![s1], Phase::Occupied);
        let out = step_vehicle(&mut v, 15.0, &lim(), &net).unwrap();
        assert!((v.speed - 0.2).abs() < 1e-12);
        assert!((out.distance - 0.01).abs() < 1e-12);

        v.speed = 10.0;
        let before = v.offset;
        step_vehicle(&mut v, 10.0, &lim(), &net).unwrap();
        assert_eq!(v.speed, 10.0);
        assert!((v.offset - before - 1.0).abs() < 1e-12);

        step_vehicle(&mut v, 0.0, &lim(), &net).unwrap();
        assert!((v.speed - 9.8).abs() < 1e-12);
    }

    #[test]
    fn step_carries_remainder_onto_next_segment() {
        let net = line(500.0, SegmentClass::Road);
        let s1 = net.segment_by_id("s1").unwrap();
        let s2 = net.segment_by_id("s2").unwrap();
        let mut v = VehicleState::new(0, vec![s1, s2], Phase::Occupied);
        v.offset = 499.6;
        v.speed = 10.0;
        let out = step_vehicle(&mut v, 10.0, &lim(), &net).unwrap();
        assert_eq!(out.segments_entered, 1);
        assert_eq!(v.segment(), s2);
        assert!((v.offset - 0.6).abs() < 1e-9);
    }

    #[test]
    fn running_off_the_route_is_an_error() {
        let net = line(500.0, SegmentClass::Road);
        let s1 = net.segment_by_id("s1").unwrap();
        let mut v = VehicleState::new(7, vec![s1], Phase::Occupied);
        v.offset = 499.5;
        v.speed = 10.0;
        assert_eq!(
            step_vehicle(&mut v, 10.0, &lim(), &net),
            Err(KinematicsError::RouteExhausted { vehicle: 7 })
        );
    }

    #[test]
    fn eta_examples() {
        let l = lim();
        assert_eq!(eta_to_point(3.0, 0.0, 10.0, &l), 0.0);
        assert_eq!(eta_to_point(10.0, 100.0, 10.0, &l), 10.0);
        assert!((eta_to_point(0.0, 100.0, 10.0, &l) - 12.5).abs() < 1e-12);
    }

    #[test]
    fn limits_validation() {
        assert!(lim().validate(15.0).is_ok());
        let bad = MotionLimits { dt: 1.0, ..lim() };
        assert!(bad.validate(15.0).is_err());
        let bad = MotionLimits { a_max: 0.0, ..lim() };
        assert!(bad.validate(15.0).is_err());
    }

    #[test]
    fn braking_speed_matches_continuous_rule_in_the_limit() {
        let fine = MotionLimits { dt: 1e-7, ..lim() };
        for gap in [10.0, 35.0, 110.0, 300.0] {
            let a = braking_speed(gap - fine.s0, 0.0, 5.0, &fine);
            assert!((a - safe_follow_speed(gap, &fine)).abs() < 1e-4);
        }
    }

    /// Brute-force closed-loop approach to a stopped obstacle: the follower
    /// must never enter the separation zone and never exceed the rate bound.
    #[test]
    fn approach_to_stopped_leader_keeps_separation() {
        let net = line(2000.0, SegmentClass::Highway);
        let s1 = net.segment_by_id("s1").unwrap();
        let l = lim();
        for v0 in [0.0, 3.0, 10.0, 15.0] {
            for obstacle in [70.0, 100.0, 333.3, 1500.0] {
                let mut v = VehicleState::new(0, vec![s1], Phase::Occupied);
                v.speed = v0;
                let mut prev = v0;
                for _ in 0..20_000 {
                    let gap = obstacle - v.offset;
                    let allowed = braking_speed(gap - l.s0, 0.0, v.speed, &l).min(15.0);
                    step_vehicle(&mut v, allowed, &l, &net).unwrap();
                    assert!(obstacle - v.offset >= l.s0 - 1e-9, "v0={v0} obstacle={obstacle}");
                    assert!((v.speed - prev).abs() <= l.a_max * l.dt + 1e-12);
                    prev = v.speed;
                }
                // comes to rest at the stop line
                assert!((obstacle - v.offset - l.s0).abs() < 1e-3, "rest gap {}", obstacle - v.offset);
                assert!(v.speed < 1e-3);
            }
        }
    }

    proptest! {
        #[test]
        fn eta_monotone(v in 0.0f64..15.0, d in 0.0f64..2000.0, dd in 0.0f64..500.0, dv in 0.0f64..5.0) {
            let l = lim();
            let cap = 15.0;
            prop_assert!(eta_to_point(v, d + dd, cap, &l) >= eta_to_point(v, d, cap, &l) - 1e-9);
            prop_assert!(eta_to_point((v + dv).min(cap), d, cap, &l) <= eta_to_point(v, d, cap, &l) + 1e-9);
        }

        #[test]
        fn braking_cap_is_always_reachable(v in 0.0f64..15.0, slack in 0.0f64..200.0, v_end in 0.0f64..15.0) {
            let l = lim();
            // start state satisfies v^2 <= v_end^2 + 2 a d
            let d = ((v * v - v_end * v_end) / (2.0 * l.a_max)).max(0.0) + slack;
            let cap = braking_speed(d, v_end, v, &l);
            prop_assert!(cap >= v - l.a_max * l.dt - 1e-9);
        }

        #[test]
        fn step_bounds(v in 0.0f64..10.0, allowed in 0.0f64..30.0) {
            let net = line(5000.0, SegmentClass::Road);
            let s1 = net.segment_by_id("s1").unwrap();
            let l = lim();
            let mut st = VehicleState::new(0, vec![s1], Phase::Occupied);
            st.speed = v;
            st.offset = 100.0;
            let out = step_vehicle(&mut st, allowed, &l, &net).unwrap();
            prop_assert!((st.speed - v).abs() <= l.a_max * l.dt + 1e-12);
            prop_assert!(st.speed <= 10.0 && st.speed >= 0.0);
            prop_assert!(out.distance <= 10.0 * l.dt + 1e-12);
        }
    }
}
