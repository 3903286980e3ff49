//! Trip records, Average Squared Delay, waiting time and saturation search.

use std::io::{self, Write};

use crate::demand::PassengerGroup;

#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub group_id: u32,
    pub size: u8,
    pub origin: String,
    pub dest: String,
    pub t_created: f64,
    pub t_board_start: f64,
    pub t_depart: f64,
    pub t_arrive: f64,
    /// Free-flow time of the static shortest route.
    pub nominal_s: f64,
}

impl TripRecord {
    pub fn from_group(g: &PassengerGroup, origin: &str, dest: &str, nominal_s: f64) -> Option<Self> {
        Some(Self {
            group_id: g.id,
            size: g.size,
            origin: origin.to_string(),
            dest: dest.to_string(),
            t_created: g.t_created,
            t_board_start: g.t_board_start?,
            t_depart: g.t_depart?,
            t_arrive: g.t_arrive?,
            nominal_s,
        })
    }

    #[inline]
    pub fn actual_s(&self) -> f64 {
        self.t_arrive - self.t_depart
    }

    /// Excess trip time over nominal, in percent.
    #[inline]
    pub fn delta_pct(&self) -> f64 {
        100.0 * (self.actual_s() - self.nominal_s) / self.nominal_s
    }

    #[inline]
    pub fn wait_s(&self) -> f64 {
        self.t_board_start - self.t_created
    }
}

/// Root mean square of the relative delays, in percent. `None` when empty.
pub fn asd(deltas_pct: &[f64]) -> Option<f64> {
    if deltas_pct.is_empty() {
        return None;
    }
    let ss: f64 = deltas_pct.iter().map(|d| d * d).sum();
    Some((ss / deltas_pct.len() as f64).sqrt())
}

pub fn asd_of(trips: &[TripRecord]) -> Option<f64> {
    let d: Vec<f64> = trips.iter().map(TripRecord::delta_pct).collect();
    asd(&d)
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

pub fn avg_wait(trips: &[TripRecord]) -> Option<f64> {
    let w: Vec<f64> = trips.iter().map(TripRecord::wait_s).collect();
    mean(&w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Saturation {
    At(f64),
    NotSaturated,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SaturationError {
    #[error("need at least two sweep points, got {0}")]
    TooFewPoints(usize),
    #[error("sweep points must be sorted by vehicle count")]
    Unsorted,
}

/// First crossing of `threshold`, linearly interpolated between the
/// bracketing grid points.
pub fn find_saturation(points: &[(f64, f64)], threshold: f64) -> Result<Saturation, SaturationError> {
    if points.len() < 2 {
        return Err(SaturationError::TooFewPoints(points.len()));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(SaturationError::Unsorted);
    }
    if points[0].1 >= threshold {
        return Ok(Saturation::At(points[0].0));
    }
    for w in points.windows(2) {
        let ((n0, a0), (n1, a1)) = (w[0], w[1]);
        if a1 >= threshold {
            if a1 == threshold {
                return Ok(Saturation::At(n1));
            }
            return Ok(Saturation::At(n0 + (n1 - n0) * (threshold - a0) / (a1 - a0)));
        }
    }
    Ok(Saturation::NotSaturated)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let mx = mean(&rx)?;
    let my = mean(&ry)?;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub const TRIPS_HEADER: &str =
    "group_id,size,origin,dest,t_created,t_board_start,t_depart,t_arrive,nominal_s,actual_s,delta_pct,wait_s";

pub fn write_trips_csv<W: Write>(mut w: W, trips: &[TripRecord]) -> io::Result<()> {
    writeln!(w, "{TRIPS_HEADER}")?;
    for t in trips {
        writeln!(
            w,
            "{},{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.4},{:.3}",
            t.group_id,
            t.size,
            t.origin,
            t.dest,
            t.t_created,
            t.t_board_start,
            t.t_depart,
            t.t_arrive,
            t.nominal_s,
            t.actual_s(),
            t.delta_pct(),
            t.wait_s()
        )?;
    }
    Ok(())
}
