use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::io::Write;

use rand::seq::SliceRandom;

use super::{GroupCounts, JoinStats, RngStreams, SimConfig, SimError, SimResult, SpeedContext};
use crate::demand::{
    dispatch_vehicle, BerthActivity, BerthEvent, DwellSampler, IdleCandidate, PassengerGroup, StationState,
};
use crate::kinematics::{braking_speed, eta_to_point, step_vehicle, MotionLimits, Phase, VehicleState};
use crate::merge::{Branch, Candidate, JoinController};
use crate::metrics::TripRecord;
use crate::network::{shortest_route, Network, NodeIdx, NodeKind, SegIdx};
use crate::routing::{plan, replan_at_fork, OccupancyView, RoutingMode};

const NONE: u32 = u32::MAX;
/// Tolerance on the separation check.
const GAP_EPS: f64 = 1e-6;
/// Joins are watched from at least this far out.
const MIN_MERGE_HORIZON: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Task {
    Idle,
    Pickup(u32),
    Carry(u32),
    Park,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loc {
    Track,
    Berth(usize),
    Depot(usize),
}

struct Vehicle {
    st: VehicleState,
    task: Task,
    loc: Loc,
    /// Terminal the vehicle sits at, or is heading to when on track.
    node: NodeIdx,
    /// Ticks spent standing still on track.
    stopped: u32,
}

struct Station {
    state: StationState,
    out_seg: SegIdx,
    entry_waiting: bool,
}

struct Depot {
    node: NodeIdx,
    out_seg: SegIdx,
    capacity: usize,
    parked: Vec<u32>,
    exit: VecDeque<u32>,
}

struct Join {
    ctrl: JoinController,
    out_seg: SegIdx,
    clearance: f64,
}

/// Route and free-flow time between every ordered pair of terminals.
struct Terminals {
    index: Vec<u32>,
    routes: Vec<Vec<Option<Vec<SegIdx>>>>,
    nominal: Vec<Vec<f64>>,
}

impl Terminals {
    fn new(net: &Network) -> Self {
        let mut nodes: Vec<NodeIdx> = net.station_nodes();
        nodes.extend(net.capacitor_nodes());
        let mut index = vec![NONE; net.node_count()];
        for (i, n) in nodes.iter().enumerate() {
            index[n.ix()] = i as u32;
        }
        let k = nodes.len();
        let mut routes = vec![vec![None; k]; k];
        let mut nominal = vec![vec![f64::INFINITY; k]; k];
        for i in 0..k {
            nominal[i][i] = 0.0;
            for j in 0..k {
                if i == j {
                    continue;
                }
                if let Ok(r) = shortest_route(net, nodes[i], nodes[j], |s| net.segment(s).nominal_time()) {
                    nominal[i][j] = r.cost(|s| net.segment(s).nominal_time());
                    routes[i][j] = Some(r.segments);
                }
            }
        }
        Self {
            index,
            routes,
            nominal,
        }
    }

    fn ix(&self, n: NodeIdx) -> usize {
        self.index[n.ix()] as usize
    }

    fn nominal(&self, a: NodeIdx, b: NodeIdx) -> f64 {
        self.nominal[self.ix(a)][self.ix(b)]
    }
}

pub(super) struct World<'a> {
    net: &'a Network,
    cfg: SimConfig,
    lim: MotionLimits,
    dwell: DwellSampler,
    streams: RngStreams,
    trace: Option<Box<dyn Write + 'a>>,

    terms: Terminals,
    vehicles: Vec<Vehicle>,
    stations: Vec<Station>,
    station_of: Vec<u32>,
    depots: Vec<Depot>,
    depot_of: Vec<u32>,
    joins: Vec<Join>,
    join_of: Vec<u32>,

    groups: Vec<PassengerGroup>,
    next_group: usize,
    queue: VecDeque<u32>,
    idle: BTreeSet<u32>,
    events: BinaryHeap<Reverse<(u64, u8, u32)>>,
    /// Vehicles standing at the end of their route, waiting to be admitted,
    /// and whether they were already turned away once.
    waiting: BTreeMap<u32, bool>,
    served: usize,

    tick: u64,
    horizon: f64,
    detour_ticks: u32,
    seg_lists: Vec<Vec<u32>>,
    pos: Vec<usize>,
    occ: OccupancyView,
    leads: Vec<[Option<Candidate>; 2]>,
    approach: Vec<(u32, u32, f64)>,
    approach_range: Vec<(u32, u32)>,
    ctx: Vec<SpeedContext>,

    min_gap: f64,
    separation_violations: u64,
    merge_violations: u64,
    berth_overflows: u64,
    detours: u64,
}

impl<'a> World<'a> {
    pub(super) fn new(
        net: &'a Network,
        cfg: &SimConfig,
        mut groups: Vec<PassengerGroup>,
        streams: RngStreams,
        trace: Option<Box<dyn Write + 'a>>,
    ) -> Result<Self, SimError> {
        groups.sort_by(|a, b| a.t_created.total_cmp(&b.t_created).then(a.id.cmp(&b.id)));
        for (i, g) in groups.iter_mut().enumerate() {
            g.id = i as u32;
            if net.stations().get(&g.origin).is_none() || net.stations().get(&g.dest).is_none() || g.origin == g.dest {
                return Err(SimError::Config(format!("group {i} needs two distinct station endpoints")));
            }
        }
        let terms = Terminals::new(net);
        let lim = cfg.limits;

        let mut station_of = vec![NONE; net.node_count()];
        let stations: Vec<Station> = net
            .stations()
            .iter()
            .enumerate()
            .map(|(i, (&n, spec))| {
                station_of[n.ix()] = i as u32;
                Station {
                    state: StationState::new(n, spec.berths as usize),
                    out_seg: net.out_segments(n)[0],
                    entry_waiting: false,
                }
            })
            .collect();
        let mut depot_of = vec![NONE; net.node_count()];
        let depots: Vec<Depot> = net
            .capacitors()
            .iter()
            .enumerate()
            .map(|(i, (&n, spec))| {
                depot_of[n.ix()] = i as u32;
                Depot {
                    node: n,
                    out_seg: net.out_segments(n)[0],
                    capacity: spec.capacity as usize,
                    parked: Vec::new(),
                    exit: VecDeque::new(),
                }
            })
            .collect();
        let mut join_of = vec![NONE; net.node_count()];
        let mut joins = Vec::new();
        for (i, node) in net.nodes().iter().enumerate() {
            if node.kind != NodeKind::Join {
                continue;
            }
            let n = NodeIdx(i as u32);
            let ins = net.in_segments(n);
            let out = net.out_segments(n)[0];
            join_of[i] = joins.len() as u32;
            joins.push(Join {
                ctrl: JoinController::new(n, [ins[0], ins[1]], [net.segment(ins[0]).class, net.segment(ins[1]).class]),
                out_seg: out,
                clearance: lim.s0 / net.segment(out).v_max,
            });
        }

        let vmax = net.max_vmax();
        let stop = lim.s0 + lim.stopping_distance(vmax) + 4.0 * vmax * lim.dt;
        let horizon = stop.max(MIN_MERGE_HORIZON);

        let n = cfg.n_vehicles as usize;
        let mut w = Self {
            net,
            cfg: cfg.clone(),
            lim,
            dwell: cfg.dwell,
            trace,
            terms,
            vehicles: Vec::with_capacity(n),
            stations,
            station_of,
            depots,
            depot_of,
            joins,
            join_of,
            groups,
            next_group: 0,
            queue: VecDeque::new(),
            idle: BTreeSet::new(),
            events: BinaryHeap::new(),
            waiting: BTreeMap::new(),
            served: 0,
            tick: 0,
            horizon,
            detour_ticks: (cfg.detour_after / lim.dt).round().max(1.0) as u32,
            seg_lists: vec![Vec::new(); net.segment_count()],
            pos: vec![0; n],
            occ: OccupancyView::empty(net, lim.s0),
            leads: Vec::new(),
            approach: Vec::new(),
            approach_range: vec![(0, 0); n],
            ctx: Vec::new(),
            min_gap: f64::INFINITY,
            separation_violations: 0,
            merge_violations: 0,
            berth_overflows: 0,
            detours: 0,
            streams,
        };
        w.leads = vec![[None, None]; w.joins.len()];
        w.place_fleet()?;
        Ok(w)
    }

    /// Stations round-robin up to one free berth each, then capacitors up to
    /// capacity, then the rest queue at capacitor exits and cruise.
    fn place_fleet(&mut self) -> Result<(), SimError> {
        let n = self.cfg.n_vehicles as usize;
        let slow = (self.cfg.sunday_driver_fraction * n as f64).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.streams.fleet);
        let mut factor = vec![1.0; n];
        for &i in &order[..slow] {
            factor[i] = self.cfg.sunday_speed_factor;
        }

        let mut placed = 0usize;
        let mut new_vehicle = |w: &mut Self, loc: Loc, node: NodeIdx, task: Task| {
            let id = w.vehicles.len() as u32;
            let mut st = VehicleState::new(id, Vec::new(), if task == Task::Park { Phase::ToPark } else { Phase::Idle });
            st.speed_factor = factor[id as usize];
            w.vehicles.push(Vehicle { st, task, loc, node, stopped: 0 });
            placed += 1;
            id
        };

        let spare = if self.depots.is_empty() { 0 } else { 1 };
        let mut progress = true;
        while self.vehicles.len() < n && progress {
            progress = false;
            for s in 0..self.stations.len() {
                if self.vehicles.len() == n {
                    break;
                }
                let st = &self.stations[s].state;
                if st.occupied() + spare < st.berths.len() {
                    let slot = st.occupied();
                    let node = st.node;
                    let id = new_vehicle(self, Loc::Berth(s), node, Task::Idle);
                    self.stations[s].state.berths[slot] = Some(crate::demand::Berthed {
                        vehicle: id,
                        activity: BerthActivity::Idle,
                    });
                    self.idle.insert(id);
                    progress = true;
                }
            }
        }
        progress = true;
        while self.vehicles.len() < n && progress {
            progress = false;
            for d in 0..self.depots.len() {
                if self.vehicles.len() == n {
                    break;
                }
                if self.depots[d].parked.len() < self.depots[d].capacity {
                    let node = self.depots[d].node;
                    let id = new_vehicle(self, Loc::Depot(d), node, Task::Idle);
                    self.depots[d].parked.push(id);
                    self.idle.insert(id);
                    progress = true;
                }
            }
        }
        if self.vehicles.len() < n && self.depots.is_empty() {
            return Err(SimError::Config(format!(
                "{n} vehicles do not fit into the network's berths and there is no capacitor to cruise from"
            )));
        }
        let mut d = 0;
        while self.vehicles.len() < n {
            let node = self.depots[d].node;
            let id = new_vehicle(self, Loc::Depot(d), node, Task::Park);
            self.depots[d].exit.push_back(id);
            d = (d + 1) % self.depots.len();
        }
        debug_assert_eq!(placed, n);
        Ok(())
    }

    fn now(&self) -> f64 {
        self.tick as f64 * self.lim.dt
    }

    fn fail(&self, message: String) -> SimError {
        SimError::Invariant { t: self.now(), message }
    }

    pub(super) fn run(&mut self) -> Result<(), SimError> {
        let ticks = (self.cfg.duration / self.lim.dt).round() as u64;
        if let Some(t) = self.trace.as_mut() {
            writeln!(t, "t,vehicle,segment,offset,speed,phase")?;
        }
        while self.tick < ticks {
            self.rebuild_lists()?;
            self.process_events();
            self.admit_waiting()?;
            self.dispatch();
            self.operate_stations()?;
            self.operate_depots()?;
            self.refresh_positions();
            self.move_vehicles()?;
            self.tick += 1;
            self.write_trace()?;
        }
        self.rebuild_lists()?;
        self.check_conservation()?;
        if let Some(t) = self.trace.as_mut() {
            t.flush()?;
        }
        Ok(())
    }

    // ---- bookkeeping --------------------------------------------------

    fn rebuild_lists(&mut self) -> Result<(), SimError> {
        for l in &mut self.seg_lists {
            l.clear();
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            if v.loc == Loc::Track {
                self.seg_lists[v.st.segment().ix()].push(i as u32);
            }
        }
        let vehicles = &self.vehicles;
        for l in &mut self.seg_lists {
            if l.len() > 1 {
                l.sort_by(|&a, &b| {
                    vehicles[a as usize]
                        .st
                        .offset
                        .total_cmp(&vehicles[b as usize].st.offset)
                        .then(a.cmp(&b))
                });
            }
        }
        for (s, l) in self.seg_lists.iter().enumerate() {
            self.occ.counts[s] = l.len() as u32;
        }
        self.refresh_positions();
        self.check_separation()
    }

    fn refresh_positions(&mut self) {
        for l in &self.seg_lists {
            for (k, &v) in l.iter().enumerate() {
                self.pos[v as usize] = k;
            }
        }
    }

    fn check_separation(&mut self) -> Result<(), SimError> {
        let s0 = self.lim.s0;
        let mut worst: Option<(f64, u32, u32)> = None;
        for l in &self.seg_lists {
            for w in l.windows(2) {
                let g = self.vehicles[w[1] as usize].st.offset - self.vehicles[w[0] as usize].st.offset;
                if worst.is_none_or(|x| g < x.0) {
                    worst = Some((g, w[0], w[1]));
                }
            }
            if let Some(&front) = l.last() {
                let st = &self.vehicles[front as usize].st;
                if st.on_last_leg() {
                    continue;
                }
                let next = st.route[st.leg + 1];
                if let Some(&rear) = self.seg_lists[next.ix()].first() {
                    let g = self.net.segment(st.segment()).length - st.offset + self.vehicles[rear as usize].st.offset;
                    if worst.is_none_or(|x| g < x.0) {
                        worst = Some((g, front, rear));
                    }
                }
            }
        }
        if let Some((g, a, b)) = worst {
            self.min_gap = self.min_gap.min(g);
            if g < s0 - GAP_EPS {
                self.separation_violations += 1;
                if self.cfg.strict {
                    return Err(self.fail(format!("vehicles {a} and {b} are {g:.3} m apart (min {s0})")));
                }
            }
        }
        Ok(())
    }

    fn check_conservation(&self) -> Result<(), SimError> {
        let counts = self.group_counts();
        if !counts.balanced() || counts.queued != self.queue.len() {
            return Err(self.fail(format!("passenger groups do not balance: {counts:?}")));
        }
        let mut n = self.seg_lists.iter().map(Vec::len).sum::<usize>();
        n += self.stations.iter().map(|s| s.state.occupied()).sum::<usize>();
        n += self.depots.iter().map(|d| d.parked.len() + d.exit.len()).sum::<usize>();
        if n != self.vehicles.len() {
            return Err(self.fail(format!("{n} vehicles accounted for, fleet is {}", self.vehicles.len())));
        }
        Ok(())
    }

    fn group_counts(&self) -> GroupCounts {
        let mut c = GroupCounts {
            generated: self.next_group,
            served: self.served,
            queued: self.queue.len(),
            ..GroupCounts::default()
        };
        for v in &self.vehicles {
            match v.task {
                Task::Pickup(g) if self.groups[g as usize].t_board_start.is_some() => c.riding += 1,
                Task::Pickup(_) => c.waiting += 1,
                Task::Carry(g) if self.groups[g as usize].t_arrive.is_none() => c.riding += 1,
                _ => {}
            }
        }
        c
    }

    // ---- demand, dwell and dispatch -----------------------------------

    /// Starts a boarding or alighting dwell in the vehicle's berth.
    fn start_dwell(&mut self, v: u32) {
        let d = self.dwell.draw(&mut self.streams.dwell);
        let end = self.tick + (d / self.lim.dt).ceil() as u64;
        self.events.push(Reverse((end, 0, v)));
        self.vehicles[v as usize].st.phase = Phase::Dwell;
        self.set_activity(v, BerthActivity::Dwelling { until: end as f64 * self.lim.dt });
    }

    fn set_activity(&mut self, v: u32, a: BerthActivity) {
        if let Loc::Berth(s) = self.vehicles[v as usize].loc {
            if let Some(b) = self.stations[s].state.get_mut(v) {
                b.activity = a;
            }
        }
    }

    fn process_events(&mut self) {
        while let Some(&Reverse((t, _, v))) = self.events.peek() {
            if t > self.tick {
                break;
            }
            self.events.pop();
            self.dwell_done(v);
        }
        let now = self.now();
        while self.next_group < self.groups.len() && self.groups[self.next_group].t_created <= now {
            self.queue.push_back(self.next_group as u32);
            self.next_group += 1;
        }
    }

    fn dwell_done(&mut self, v: u32) {
        match self.vehicles[v as usize].task {
            Task::Pickup(g) => {
                // the trip clock starts when boarding ends, not when the
                // vehicle gets out of the station
                self.groups[g as usize].t_depart = Some(self.now());
                let dest = self.groups[g as usize].dest;
                let veh = &mut self.vehicles[v as usize];
                veh.task = Task::Carry(g);
                veh.st.phase = Phase::Occupied;
                veh.node = dest;
                self.set_activity(v, BerthActivity::Ready);
            }
            Task::Carry(g) => {
                // the group has arrived once it has left the vehicle
                self.groups[g as usize].t_arrive = Some(self.now());
                self.served += 1;
                let veh = &mut self.vehicles[v as usize];
                veh.task = Task::Idle;
                veh.st.phase = Phase::Idle;
                self.set_activity(v, BerthActivity::Idle);
                self.idle.insert(v);
            }
            Task::Idle | Task::Park => {}
        }
    }

    fn dispatch(&mut self) {
        while !self.idle.is_empty() {
            let Some(&g) = self.queue.front() else { break };
            let origin = self.groups[g as usize].origin;
            let cands: Vec<IdleCandidate> = self
                .idle
                .iter()
                .map(|&v| IdleCandidate {
                    vehicle: v,
                    nominal_s: self.terms.nominal(self.vehicles[v as usize].node, origin),
                })
                .filter(|c| c.nominal_s.is_finite())
                .collect();
            let Some(v) = dispatch_vehicle(&cands) else { break };
            self.queue.pop_front();
            self.idle.remove(&v);
            let now = self.now();
            let veh = &mut self.vehicles[v as usize];
            veh.task = Task::Pickup(g);
            let (loc, at) = (veh.loc, veh.node);
            if at != origin {
                veh.st.phase = Phase::ToPickup;
                veh.node = origin;
            }
            match loc {
                Loc::Berth(_) if at == origin => {
                    // boards where it stands
                    self.groups[g as usize].t_board_start = Some(now);
                    self.start_dwell(v);
                }
                Loc::Berth(_) => self.set_activity(v, BerthActivity::Ready),
                Loc::Depot(d) => {
                    self.depots[d].parked.retain(|&x| x != v);
                    self.depots[d].exit.push_back(v);
                }
                Loc::Track => unreachable!("idle vehicles are parked"),
            }
        }
    }

    /// Nearest other capacitor with room, else the nearest other capacitor,
    /// else the nearest other station.
    fn park_target(&self, from: NodeIdx) -> Option<NodeIdx> {
        let best = |it: &mut dyn Iterator<Item = NodeIdx>| {
            it.filter(|&n| n != from)
                .map(|n| (self.terms.nominal(from, n), n))
                .filter(|(t, _)| t.is_finite())
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, n)| n)
        };
        best(&mut self.depots.iter().filter(|d| d.parked.len() < d.capacity).map(|d| d.node))
            .or_else(|| best(&mut self.depots.iter().map(|d| d.node)))
            .or_else(|| best(&mut self.stations.iter().map(|s| s.state.node)))
    }

    fn route_between(&self, from: NodeIdx, to: NodeIdx) -> Result<Vec<SegIdx>, SimError> {
        if self.cfg.routing.mode == RoutingMode::Dynamic {
            return Ok(plan(self.net, from, to, &self.occ, &self.cfg.routing)?.segments);
        }
        self.terms.routes[self.terms.ix(from)][self.terms.ix(to)]
            .clone()
            .ok_or_else(|| SimError::Config(format!("no route between terminals {from:?} and {to:?}")))
    }

    // ---- stations and capacitors --------------------------------------

    fn room_on(&self, seg: SegIdx) -> bool {
        self.seg_lists[seg.ix()]
            .first()
            .is_none_or(|&r| self.vehicles[r as usize].st.offset >= self.lim.s0)
    }

    /// Puts a parked vehicle on the first segment of its trip.
    fn launch(&mut self, v: u32, seg: SegIdx) -> Result<(), SimError> {
        let from = self.net.segment(seg).from;
        let veh = &self.vehicles[v as usize];
        let to = match veh.task {
            Task::Park => self.park_target(from).ok_or_else(|| self.fail("no place to park".into()))?,
            _ => veh.node,
        };
        let route = self.route_between(from, to)?;
        debug_assert_eq!(route[0], seg);
        let veh = &mut self.vehicles[v as usize];
        veh.node = to;
        veh.loc = Loc::Track;
        veh.st.route = route;
        veh.st.leg = 0;
        veh.st.offset = 0.0;
        veh.st.speed = 0.0;
        veh.stopped = 0;
        match veh.task {
            Task::Carry(_) => veh.st.phase = Phase::Occupied,
            Task::Pickup(_) => veh.st.phase = Phase::ToPickup,
            Task::Park => veh.st.phase = Phase::ToPark,
            Task::Idle => return Err(self.fail(format!("idle vehicle {v} launched"))),
        }
        self.seg_lists[seg.ix()].insert(0, v);
        Ok(())
    }

    fn admit_waiting(&mut self) -> Result<(), SimError> {
        for s in &mut self.stations {
            s.entry_waiting = false;
        }
        let waiting: Vec<u32> = self.waiting.keys().copied().collect();
        for v in waiting {
            let node = self.net.segment(self.vehicles[v as usize].st.segment()).to;
            let seg = self.vehicles[v as usize].st.segment();
            if let Some(s) = self.station(node) {
                if self.stations[s].state.enter(v) {
                    self.vehicles[v as usize].loc = Loc::Berth(s);
                    self.vehicles[v as usize].st.speed = 0.0;
                    self.seg_lists[seg.ix()].retain(|&x| x != v);
                    self.waiting.remove(&v);
                } else {
                    self.stations[s].entry_waiting = true;
                    let turned_away = self.waiting.insert(v, true);
                    if turned_away == Some(false) {
                        self.berth_overflows += 1;
                    }
                }
            } else if let Some(d) = self.depot(node) {
                if self.depots[d].parked.len() < self.depots[d].capacity {
                    let veh = &mut self.vehicles[v as usize];
                    veh.loc = Loc::Depot(d);
                    veh.task = Task::Idle;
                    veh.st.phase = Phase::Idle;
                    veh.st.speed = 0.0;
                    veh.node = node;
                    self.depots[d].parked.push(v);
                    self.idle.insert(v);
                    self.seg_lists[seg.ix()].retain(|&x| x != v);
                } else {
                    // full: pass through and cruise on to the next capacitor
                    let veh = &mut self.vehicles[v as usize];
                    veh.loc = Loc::Depot(d);
                    veh.st.speed = 0.0;
                    veh.node = node;
                    self.depots[d].exit.push_back(v);
                    self.seg_lists[seg.ix()].retain(|&x| x != v);
                }
                self.waiting.remove(&v);
            } else {
                return Err(self.fail(format!("vehicle {v} stopped at non-terminal node {node:?}")));
            }
        }
        Ok(())
    }

    fn station(&self, n: NodeIdx) -> Option<usize> {
        let s = self.station_of[n.ix()];
        (s != NONE).then_some(s as usize)
    }

    fn depot(&self, n: NodeIdx) -> Option<usize> {
        let d = self.depot_of[n.ix()];
        (d != NONE).then_some(d as usize)
    }

    fn operate_stations(&mut self) -> Result<(), SimError> {
        for s in 0..self.stations.len() {
            let node = self.stations[s].state.node;
            for ev in self.stations[s].state.advance() {
                let BerthEvent::Settled { vehicle: v, .. } = ev;
                self.settle(v, node);
            }
            // an idle vehicle at the head leaves when the station is needed
            let st = &self.stations[s].state;
            if let Some(Some(head)) = st.berths.first() {
                if head.activity == BerthActivity::Idle {
                    let behind_busy = st.berths[1..]
                        .iter()
                        .flatten()
                        .any(|b| b.activity != BerthActivity::Idle);
                    if behind_busy || st.free_count() == 0 || self.stations[s].entry_waiting {
                        let v = head.vehicle;
                        if self.park_target(node).is_some() {
                            self.idle.remove(&v);
                            self.vehicles[v as usize].task = Task::Park;
                            self.vehicles[v as usize].st.phase = Phase::ToPark;
                            self.set_activity(v, BerthActivity::Ready);
                        }
                    }
                }
            }
            if let Some(v) = self.stations[s].state.head_ready() {
                let seg = self.stations[s].out_seg;
                if self.room_on(seg) {
                    self.stations[s].state.take_head();
                    self.launch(v, seg)?;
                }
            }
        }
        Ok(())
    }

    fn settle(&mut self, v: u32, node: NodeIdx) {
        let now = self.now();
        self.vehicles[v as usize].node = node;
        match self.vehicles[v as usize].task {
            Task::Pickup(g) if self.groups[g as usize].origin == node => {
                self.groups[g as usize].t_board_start = Some(now);
                self.start_dwell(v);
            }
            Task::Carry(g) if self.groups[g as usize].dest == node => self.start_dwell(v),
            _ => {
                let veh = &mut self.vehicles[v as usize];
                veh.task = Task::Idle;
                veh.st.phase = Phase::Idle;
                self.set_activity(v, BerthActivity::Idle);
                self.idle.insert(v);
            }
        }
    }

    fn operate_depots(&mut self) -> Result<(), SimError> {
        for d in 0..self.depots.len() {
            let seg = self.depots[d].out_seg;
            if let Some(&v) = self.depots[d].exit.front() {
                if self.room_on(seg) {
                    self.depots[d].exit.pop_front();
                    self.launch(v, seg)?;
                }
            }
        }
        Ok(())
    }

    // ---- motion -------------------------------------------------------

    /// Looks ahead along each route: leader gap, slower segments, route end
    /// and the joins it will cross.
    fn survey(&mut self) {
        for l in &mut self.leads {
            *l = [None, None];
        }
        self.approach.clear();
        self.ctx.clear();
        let lim = self.lim;
        for (vid, veh) in self.vehicles.iter().enumerate() {
            let st = &veh.st;
            let f = st.speed_factor;
            let mut ctx = SpeedContext {
                segment_cap: 0.0,
                leader_gap: None,
                merge_distance: None,
                lookahead_cap: f64::INFINITY,
            };
            if veh.loc != Loc::Track {
                self.ctx.push(ctx);
                continue;
            }
            let seg0 = self.net.segment(st.segment());
            ctx.segment_cap = f * seg0.v_max;
            let start = self.approach.len() as u32;
            let list = &self.seg_lists[st.segment().ix()];
            let p = self.pos[vid];
            if p + 1 < list.len() {
                ctx.leader_gap = Some(self.vehicles[list[p + 1] as usize].st.offset - st.offset);
            }
            let mut dist = seg0.length - st.offset;
            let mut k = st.leg;
            while dist <= self.horizon {
                let s = st.route[k];
                let sg = self.net.segment(s);
                let j = self.join_of[sg.to.ix()];
                if j != NONE {
                    let join = &self.joins[j as usize];
                    if let Some(b) = join.ctrl.branch_of(s) {
                        self.approach.push((vid as u32, j, dist));
                        let eta = eta_to_point(st.speed, dist, f * sg.v_max, &lim);
                        let slot = &mut self.leads[j as usize][b.ix()];
                        let closer = slot.is_none_or(|c| dist < c.distance || (dist == c.distance && (vid as u32) < c.vehicle));
                        if closer {
                            *slot = Some(Candidate {
                                vehicle: vid as u32,
                                distance: dist,
                                eta,
                            });
                        }
                    }
                }
                if k + 1 == st.route.len() {
                    ctx.lookahead_cap = ctx.lookahead_cap.min(braking_speed(dist, 0.0, st.speed, &lim));
                    break;
                }
                k += 1;
                let nx = self.net.segment(st.route[k]);
                let vn = f * nx.v_max;
                if vn < ctx.segment_cap {
                    ctx.lookahead_cap = ctx.lookahead_cap.min(braking_speed(dist, vn, st.speed, &lim));
                }
                if ctx.leader_gap.is_none() {
                    if let Some(&r) = self.seg_lists[st.route[k].ix()].first() {
                        ctx.leader_gap = Some(dist + self.vehicles[r as usize].st.offset);
                    }
                }
                dist += nx.length;
            }
            self.approach_range[vid] = (start, self.approach.len() as u32);
            self.ctx.push(ctx);
        }
    }

    fn update_joins(&mut self) {
        let s0 = self.lim.s0;
        for (j, join) in self.joins.iter_mut().enumerate() {
            let ctrl = &mut join.ctrl;
            if let Some(z) = ctrl.zone_vehicle {
                let v = &self.vehicles[z as usize];
                let inside = v.loc == Loc::Track && v.st.segment() == join.out_seg && v.st.offset < s0;
                if !inside {
                    ctrl.on_zone_clear();
                }
            }
            let leads = self.leads[j];
            if let Some((h, b)) = ctrl.grant {
                match leads[b.ix()] {
                    None => ctrl.revoke(h),
                    // a vehicle merged in ahead of the holder on the same branch
                    Some(c) if c.vehicle != h => ctrl.grant = Some((c.vehicle, b)),
                    Some(_) => {}
                }
            }
            ctrl.update(self.cfg.policy, leads, join.clearance);

        }
    }

    fn move_vehicles(&mut self) -> Result<(), SimError> {
        self.survey();
        self.update_joins();
        let lim = self.lim;
        for vid in 0..self.vehicles.len() {
            if self.vehicles[vid].loc != Loc::Track {
                continue;
            }
            let mut ctx = self.ctx[vid];
            let (a, b) = self.approach_range[vid];
            for &(_, j, dist) in &self.approach[a as usize..b as usize] {
                let granted = matches!(self.joins[j as usize].ctrl.grant, Some((h, _)) if h == vid as u32);
                if !granted {
                    ctx.merge_distance = Some(dist);
                    break;
                }
            }
            let allowed = super::vehicle_allowed_speed(self.vehicles[vid].st.speed, &ctx, &lim);
            let old_leg = self.vehicles[vid].st.leg;
            let out = step_vehicle(&mut self.vehicles[vid].st, allowed, &lim, self.net)?;
            let veh = &mut self.vehicles[vid];
            veh.stopped = if veh.st.speed == 0.0 { veh.stopped + 1 } else { 0 };
            if veh.stopped >= self.detour_ticks {
                self.detour(vid)?;
            }
            for k in old_leg..old_leg + out.segments_entered {
                let s = self.vehicles[vid].st.route[k];
                let j = self.join_of[self.net.segment(s).to.ix()];
                if j == NONE {
                    continue;
                }
                let ctrl = &mut self.joins[j as usize].ctrl;
                let branch = ctrl.branch_of(s).unwrap_or(Branch::A);
                let held = matches!(ctrl.grant, Some((h, _)) if h == vid as u32);
                let other_zone = ctrl.zone_owner.is_some_and(|o| o != branch);
                ctrl.on_pass(vid as u32, branch);
                if !held || other_zone {
                    self.merge_violations += 1;
                    if self.cfg.strict {
                        let id = &self.net.node(ctrl.join).id;
                        return Err(self.fail(format!("vehicle {vid} crossed join {id} without a clear grant")));
                    }
                }
            }
            if out.segments_entered > 0 && self.cfg.routing.mode == RoutingMode::Dynamic {
                let st = &self.vehicles[vid].st;
                if self.net.node(self.net.segment(st.segment()).to).kind == NodeKind::Fork && !st.on_last_leg() {
                    let r = replan_at_fork(&st.route, st.leg, self.net, &self.occ, &self.cfg.routing)?;
                    self.vehicles[vid].st.route = r;
                }
            }
            if out.segments_entered > 0 && self.vehicles[vid].task == Task::Park {
                self.retarget_parking(vid)?;
            }
            if out.reached_end && !self.waiting.contains_key(&(vid as u32)) {
                self.waiting.insert(vid as u32, false);
            }
        }
        Ok(())
    }

    /// A vehicle stuck in front of a fork whose next segment stays blocked
    /// takes the free branch and plans again from there.
    fn detour(&mut self, vid: usize) -> Result<(), SimError> {
        let st = &self.vehicles[vid].st;
        if st.on_last_leg() {
            return Ok(());
        }
        let seg = self.net.segment(st.segment());
        let fork = seg.to;
        if self.net.node(fork).kind != NodeKind::Fork || seg.length - st.offset > self.lim.s0 + 1e-6 {
            return Ok(());
        }
        let next = st.route[st.leg + 1];
        let Some(&alt) = self.net.out_segments(fork).iter().find(|&&s| s != next) else {
            return Ok(());
        };
        if self.room_on(next) || !self.room_on(alt) {
            return Ok(());
        }
        let to = self.net.segment(alt).to;
        let dest = self.vehicles[vid].node;
        let tail = if to == dest {
            Vec::new()
        } else if self.station(to).is_some() || self.depot(to).is_some() {
            return Ok(());
        } else {
            match plan(self.net, to, dest, &self.occ, &self.cfg.routing) {
                Ok(r) => r.segments,
                Err(_) => return Ok(()),
            }
        };
        let veh = &mut self.vehicles[vid];
        veh.st.route.truncate(veh.st.leg + 1);
        veh.st.route.push(alt);
        veh.st.route.extend(tail);
        veh.stopped = 0;
        self.detours += 1;
        Ok(())
    }

    /// At the fork in front of a full capacitor, heads for the next one
    /// instead of stopping.
    fn retarget_parking(&mut self, vid: usize) -> Result<(), SimError> {
        let st = &self.vehicles[vid].st;
        let target = self.vehicles[vid].node;
        if st.on_last_leg() || self.net.segment(st.route[st.leg + 1]).to != target {
            return Ok(());
        }
        let at = self.net.segment(st.segment()).to;
        let Some(d) = self.depot(target) else { return Ok(()) };
        if self.net.node(at).kind != NodeKind::Fork || self.depots[d].parked.len() < self.depots[d].capacity {
            return Ok(());
        }
        let Some(next) = self.park_target(target).filter(|&n| n != target) else {
            return Ok(());
        };
        let tail = plan(self.net, at, next, &self.occ, &self.cfg.routing)?;
        let veh = &mut self.vehicles[vid];
        veh.st.route.truncate(veh.st.leg + 1);
        veh.st.route.extend(tail.segments);
        veh.node = next;
        Ok(())
    }

    fn write_trace(&mut self) -> Result<(), SimError> {
        let Some(t) = self.trace.as_mut() else {
            return Ok(());
        };
        let now = self.tick as f64 * self.lim.dt;
        for (i, v) in self.vehicles.iter().enumerate() {
            if v.loc == Loc::Track {
                writeln!(
                    t,
                    "{:.1},{},{},{:.3},{:.3},{}",
                    now,
                    i,
                    self.net.segment(v.st.segment()).id,
                    v.st.offset,
                    v.st.speed,
                    v.st.phase.as_str()
                )?;
            }
        }
        Ok(())
    }

    pub(super) fn into_result(self) -> SimResult {
        let name = |n: NodeIdx| self.net.node(n).id.clone();
        let trips: Vec<TripRecord> = self
            .groups
            .iter()
            .filter_map(|g| TripRecord::from_group(g, &name(g.origin), &name(g.dest), self.terms.nominal(g.origin, g.dest)))
            .collect();
        let counts = self.group_counts();
        SimResult {
            trips,
            warmup: self.cfg.warmup,
            duration: self.cfg.duration,
            asd_pct: None,
            avg_wait_s: None,
            counts,
            joins: self
                .joins
                .iter()
                .map(|j| JoinStats {
                    join: name(j.ctrl.join),
                    classes: j.ctrl.classes,
                    grants: j.ctrl.stats,
                })
                .collect(),
            min_gap: self.min_gap,
            separation_violations: self.separation_violations,
            merge_violations: self.merge_violations,
            berth_overflows: self.berth_overflows,
            detours: self.detours,
        }
    }
}
