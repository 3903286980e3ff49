//! The bundled "City" benchmark: a town centre and four suburbs tied together
//! by a two-way highway ring through four roundabouts.
//!
//! Layout:
//! * four roundabouts at the compass points of the highway ring, each a
//!   one-way ring of 4 fork + 4 join nodes joined by 50 m road segments;
//! * each roundabout has four arms: outward to a suburb loop, inward to the
//!   city loop, and the two highway directions;
//! * the city loop is a one-way road ring with one off-line station per
//!   quadrant;
//! * every suburb loop carries two off-line stations and one capacitor.
//!
//! Stations and capacitors sit on sidings (fork, in-siding, terminal,
//! out-siding, join) next to a 100 m main-line bypass.

use std::f64::consts::FRAC_PI_2;

use super::{Network, NetworkBuilder, NodeKind, SegmentClass};

pub const CITY_CAPACITOR_CAPACITY: u32 = 20;

const HIGHWAY_LEN: f64 = 1800.0;
const RADIAL_LEN: f64 = 700.0;
const RING_SEG_LEN: f64 = 50.0;
const SIDING_LEN: f64 = 80.0;
const BYPASS_LEN: f64 = 100.0;
const CITY_ENTRY_LEN: f64 = 60.0;
const CITY_ARC_LEN: f64 = 200.0;
const SUBURB_SPUR_LEN: f64 = 450.0;
const SUBURB_LINK_LEN: f64 = 300.0;

const HIGHWAY_RADIUS: f64 = 1150.0;
const CITY_RADIUS: f64 = 350.0;
const ROUNDABOUT_RADIUS: f64 = 32.0;

// roundabout arms in ring order
const ARM_OUT: usize = 0;
const ARM_NEXT: usize = 1;
const ARM_IN: usize = 2;
const ARM_PREV: usize = 3;

fn polar(r: f64, theta: f64) -> (f64, f64) {
    ((r * theta.cos() * 10.0).round() / 10.0, (r * theta.sin() * 10.0).round() / 10.0)
}

fn offset(p: (f64, f64), r: f64, theta: f64) -> (f64, f64) {
    let q = polar(r, theta);
    (((p.0 + q.0) * 10.0).round() / 10.0, ((p.1 + q.1) * 10.0).round() / 10.0)
}

/// Adds `fork -> in-siding -> terminal -> out-siding -> join` plus the bypass,
/// and returns the (fork, join) ids.
fn siding(
    b: &mut NetworkBuilder,
    prefix: &str,
    terminal: &str,
    kind: NodeKind,
    at: (f64, f64),
    outward: f64,
) -> (String, String) {
    let fork = format!("{prefix}f");
    let join = format!("{prefix}j");
    let tangent = outward + FRAC_PI_2;
    b.node(&fork, NodeKind::Fork, Some(offset(at, 50.0, tangent + std::f64::consts::PI)))
        .node(terminal, kind, Some(offset(at, 40.0, outward)))
        .node(&join, NodeKind::Join, Some(offset(at, 50.0, tangent)))
        .segment(format!("{prefix}m"), &fork, &join, BYPASS_LEN, SegmentClass::Road, None)
        .segment(format!("{prefix}i"), &fork, terminal, SIDING_LEN, SegmentClass::Road, None)
        .segment(format!("{prefix}o"), terminal, &join, SIDING_LEN, SegmentClass::Road, None);
    (fork, join)
}

pub fn build_city_benchmark() -> Network {
    let mut b = NetworkBuilder::new();
    let rb_fork = |k: usize, a: usize| format!("rb{k}f{a}");
    let rb_join = |k: usize, a: usize| format!("rb{k}j{a}");

    for k in 0..4 {
        let theta = k as f64 * FRAC_PI_2;
        let centre = polar(HIGHWAY_RADIUS, theta);
        // arm a points along theta + a*90deg; fork sits just before its join
        for a in 0..4 {
            let arm = theta + a as f64 * FRAC_PI_2;
            b.node(rb_fork(k, a), NodeKind::Fork, Some(offset(centre, ROUNDABOUT_RADIUS, arm - 0.3)))
                .node(rb_join(k, a), NodeKind::Join, Some(offset(centre, ROUNDABOUT_RADIUS, arm + 0.3)));
        }
        for a in 0..4 {
            b.segment(format!("rb{k}r{a}a"), rb_fork(k, a), rb_join(k, a), RING_SEG_LEN, SegmentClass::Road, None)
                .segment(
                    format!("rb{k}r{a}b"),
                    rb_join(k, a),
                    rb_fork(k, (a + 1) % 4),
                    RING_SEG_LEN,
                    SegmentClass::Road,
                    None,
                );
        }
    }

    // highway ring, both directions
    for k in 0..4 {
        let n = (k + 1) % 4;
        b.segment(format!("hw{k}n"), rb_fork(k, ARM_NEXT), rb_join(n, ARM_PREV), HIGHWAY_LEN, SegmentClass::Highway, None)
            .segment(format!("hw{k}p"), rb_fork(n, ARM_PREV), rb_join(k, ARM_NEXT), HIGHWAY_LEN, SegmentClass::Highway, None);
    }

    // city loop, one way in increasing quadrant order
    for k in 0..4 {
        let theta = k as f64 * FRAC_PI_2;
        b.node(format!("cf{k}"), NodeKind::Fork, Some(polar(CITY_RADIUS, theta - 0.15)))
            .node(format!("cj{k}"), NodeKind::Join, Some(polar(CITY_RADIUS, theta + 0.15)));
        let mid = theta + FRAC_PI_2 / 2.0;
        let (sf, sj) = siding(&mut b, &format!("cs{k}"), &format!("C{k}"), NodeKind::Station, polar(CITY_RADIUS, mid), mid);
        b.segment(format!("c{k}a"), format!("cf{k}"), format!("cj{k}"), CITY_ENTRY_LEN, SegmentClass::Road, None)
            .segment(format!("c{k}b"), format!("cj{k}"), &sf, CITY_ARC_LEN, SegmentClass::Road, None)
            .segment(format!("c{k}c"), &sj, format!("cf{}", (k + 1) % 4), CITY_ARC_LEN, SegmentClass::Road, None)
            .segment(format!("rad{k}i"), rb_fork(k, ARM_IN), format!("cj{k}"), RADIAL_LEN, SegmentClass::Road, None)
            .segment(format!("rad{k}o"), format!("cf{k}"), rb_join(k, ARM_IN), RADIAL_LEN, SegmentClass::Road, None);
    }

    // suburbs: spur out, station, capacitor, station, spur back
    for k in 0..4 {
        let theta = k as f64 * FRAC_PI_2;
        let r0 = HIGHWAY_RADIUS + 450.0;
        let tangent = theta + FRAC_PI_2;
        let p1 = offset(polar(r0, theta), 250.0, tangent - std::f64::consts::PI);
        let p2 = polar(r0 + 250.0, theta);
        let p3 = offset(polar(r0, theta), 250.0, tangent);
        let (f1, j1) = siding(&mut b, &format!("s{k}a"), &format!("S{k}A"), NodeKind::Station, p1, theta);
        let (fc, jc) = siding(&mut b, &format!("s{k}c"), &format!("D{k}"), NodeKind::Capacitor, p2, theta);
        let (f2, j2) = siding(&mut b, &format!("s{k}b"), &format!("S{k}B"), NodeKind::Station, p3, theta);
        b.segment(format!("sub{k}o"), rb_fork(k, ARM_OUT), &f1, SUBURB_SPUR_LEN, SegmentClass::Road, None)
            .segment(format!("sub{k}x"), &j1, &fc, SUBURB_LINK_LEN, SegmentClass::Road, None)
            .segment(format!("sub{k}y"), &jc, &f2, SUBURB_LINK_LEN, SegmentClass::Road, None)
            .segment(format!("sub{k}r"), &j2, rb_join(k, ARM_OUT), SUBURB_SPUR_LEN, SegmentClass::Road, None)
            .capacitor(format!("D{k}"), CITY_CAPACITOR_CAPACITY);
    }
    for k in 0..4 {
        b.station(format!("C{k}"), 5)
            .station(format!("S{k}A"), 5)
            .station(format!("S{k}B"), 5);
    }
    b.build().expect("bundled benchmark is well formed")
}
