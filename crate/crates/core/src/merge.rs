//! Join-node merge control.
//!
//! Each join has two incoming branches. Every tick the controller looks at
//! the lead vehicle of each branch inside the conflict horizon and hands out
//! at most one grant. A vehicle without a grant treats the merge point as a
//! stopped obstacle, so it brakes to the stop line `s0` before the join.
//!
//! Two leads whose projected arrivals are closer than the clearance time are
//! *contested*; the priority policy decides those. Otherwise the earlier
//! arrival goes first. The branch that most recently crossed the join keeps
//! the merge zone until its last vehicle is `s0` past the join, and only
//! that branch can be granted meanwhile.

use std::fmt;
use std::str::FromStr;

use crate::kinematics::{safe_follow_speed, MotionLimits};
use crate::network::{NodeIdx, SegIdx, SegmentClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PriorityPolicy {
    HighwayFirst,
    RoadFirst,
    Slider,
}

impl PriorityPolicy {
    pub const ALL: [PriorityPolicy; 3] = [
        PriorityPolicy::HighwayFirst,
        PriorityPolicy::Slider,
        PriorityPolicy::RoadFirst,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PriorityPolicy::HighwayFirst => "highway",
            PriorityPolicy::RoadFirst => "road",
            PriorityPolicy::Slider => "slider",
        }
    }
}

impl fmt::Display for PriorityPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PriorityPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "highway" => Ok(PriorityPolicy::HighwayFirst),
            "road" => Ok(PriorityPolicy::RoadFirst),
            "slider" => Ok(PriorityPolicy::Slider),
            _ => Err(format!("unknown policy `{s}` (expected highway|road|slider)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    A,
    B,
}

impl Branch {
    #[inline]
    pub fn other(self) -> Branch {
        match self {
            Branch::A => Branch::B,
            Branch::B => Branch::A,
        }
    }

    #[inline]
    pub fn ix(self) -> usize {
        match self {
            Branch::A => 0,
            Branch::B => 1,
        }
    }
}

pub fn detect_conflict(eta_a: f64, eta_b: f64, clearance: f64) -> bool {
    (eta_a - eta_b).abs() < clearance
}

/// Speed cap for a vehicle without a grant, `distance_to_merge` metres from
/// the join node.
pub fn ungranted_speed_cap(distance_to_merge: f64, limits: &MotionLimits) -> f64 {
    safe_follow_speed(distance_to_merge, limits)
}

/// Lead vehicle of one branch, as seen this tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub vehicle: u32,
    pub distance: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GrantStats {
    pub contested: [u64; 2],
    pub uncontested: [u64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinController {
    pub join: NodeIdx,
    pub branches: [SegIdx; 2],
    pub classes: [SegmentClass; 2],
    pub slider_bit: Branch,
    /// Vehicle allowed through the merge and the branch it comes from.
    pub grant: Option<(u32, Branch)>,
    /// Branch whose vehicles are still within `s0` past the join.
    pub zone_owner: Option<Branch>,
    /// Most recent vehicle to cross; the zone clears when it is `s0` past.
    pub zone_vehicle: Option<u32>,
    pub stats: GrantStats,
}

impl JoinController {
    pub fn new(join: NodeIdx, branches: [SegIdx; 2], classes: [SegmentClass; 2]) -> Self {
        Self {
            join,
            branches,
            classes,
            slider_bit: Branch::A,
            grant: None,
            zone_owner: None,
            zone_vehicle: None,
            stats: GrantStats::default(),
        }
    }

    pub fn branch_of(&self, seg: SegIdx) -> Option<Branch> {
        if self.branches[0] == seg {
            Some(Branch::A)
        } else if self.branches[1] == seg {
            Some(Branch::B)
        } else {
            None
        }
    }

    /// Winner of a contested conflict without touching controller state.
    pub fn peek(&self, policy: PriorityPolicy) -> Branch {
        let [ca, cb] = self.classes;
        match policy {
            _ if ca == cb => self.slider_bit,
            PriorityPolicy::Slider => self.slider_bit,
            PriorityPolicy::HighwayFirst => {
                if ca == SegmentClass::Highway {
                    Branch::A
                } else {
                    Branch::B
                }
            }
            PriorityPolicy::RoadFirst => {
                if ca == SegmentClass::Road {
                    Branch::A
                } else {
                    Branch::B
                }
            }
        }
    }

    /// True when `policy` decides contested conflicts here by alternation.
    pub fn alternates(&self, policy: PriorityPolicy) -> bool {
        policy == PriorityPolicy::Slider || self.classes[0] == self.classes[1]
    }

    /// Decides a contested conflict, flipping the slider bit when the
    /// alternating rule was used.
    pub fn resolve(&mut self, policy: PriorityPolicy) -> Branch {
        let winner = self.peek(policy);
        if self.alternates(policy) {
            self.slider_bit = winner.other();
        }
        winner
    }

    /// Records that `vehicle` crossed the join from `branch`.
    pub fn on_pass(&mut self, vehicle: u32, branch: Branch) {
        self.zone_owner = Some(branch);
        self.zone_vehicle = Some(vehicle);
        if matches!(self.grant, Some((v, _)) if v == vehicle) {
            self.grant = None;
        }
    }

    /// Releases the merge zone once the last crossing vehicle is clear.
    pub fn on_zone_clear(&mut self) {
        self.zone_owner = None;
        self.zone_vehicle = None;
    }

    /// Drops a grant whose holder no longer approaches this join.
    pub fn revoke(&mut self, vehicle: u32) {
        if matches!(self.grant, Some((v, _)) if v == vehicle) {
            self.grant = None;
        }
    }

    fn eligible(&self, b: Branch) -> bool {
        self.zone_owner.is_none_or(|owner| owner == b)
    }

    /// Per-tick decision. `leads[i]` is the nearest approaching vehicle on
    /// branch `i` within the horizon.
    pub fn update(
        &mut self,
        policy: PriorityPolicy,
        leads: [Option<Candidate>; 2],
        clearance: f64,
    ) -> Option<u32> {
        if let Some((v, _)) = self.grant {
            return Some(v);
        }
        let (winner, contested) = match leads {
            [None, None] => return None,
            [Some(_), None] => (Branch::A, false),
            [None, Some(_)] => (Branch::B, false),
            [Some(a), Some(b)] => {
                if detect_conflict(a.eta, b.eta, clearance) {
                    (self.peek(policy), true)
                } else if a.eta <= b.eta {
                    (Branch::A, false)
                } else {
                    (Branch::B, false)
                }
            }
        };
        if !self.eligible(winner) {
            return None;
        }
        let cand = leads[winner.ix()].expect("winner has a lead");
        if contested {
            self.resolve(policy);
            self.stats.contested[winner.ix()] += 1;
        } else {
            self.stats.uncontested[winner.ix()] += 1;
        }
        self.grant = Some((cand.vehicle, winner));
        Some(cand.vehicle)
    }
}
