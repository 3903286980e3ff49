//! Passenger demand, boarding dwell, berth discipline and vehicle dispatch.

use rand::Rng;

use crate::network::NodeIdx;

#[derive(Debug, Clone, PartialEq)]
pub struct PassengerGroup {
    pub id: u32,
    pub size: u8,
    pub origin: NodeIdx,
    pub dest: NodeIdx,
    pub t_created: f64,
    pub t_board_start: Option<f64>,
    pub t_depart: Option<f64>,
    pub t_arrive: Option<f64>,
}

impl PassengerGroup {
    pub fn wait(&self) -> Option<f64> {
        self.t_board_start.map(|t| t - self.t_created)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandConfig {
    /// Mean arrival rate, groups per hour.
    pub groups_per_hour: f64,
}

impl Default for DemandConfig {
    fn default() -> Self {
        Self {
            groups_per_hour: 480.0,
        }
    }
}

/// Poisson arrivals over `[0, horizon)` with uniform origin, uniform
/// destination among the other stations and uniform group size 1-4.
pub fn generate_demand<R: Rng>(
    cfg: &DemandConfig,
    stations: &[NodeIdx],
    horizon: f64,
    rng: &mut R,
) -> Vec<PassengerGroup> {
    let mut out = Vec::new();
    if horizon <= 0.0 || cfg.groups_per_hour <= 0.0 || stations.len() < 2 {
        return out;
    }
    let rate = cfg.groups_per_hour / 3600.0;
    let mut t = 0.0;
    loop {
        // 1 - u lies in (0, 1], so the log is finite
        let u: f64 = rng.gen();
        t += -(1.0 - u).ln() / rate;
        if t >= horizon {
            break;
        }
        let o = rng.gen_range(0..stations.len());
        let mut d = rng.gen_range(0..stations.len() - 1);
        if d >= o {
            d += 1;
        }
        let size = rng.gen_range(1..=4u8);
        out.push(PassengerGroup {
            id: out.len() as u32,
            size,
            origin: stations[o],
            dest: stations[d],
            t_created: t,
            t_board_start: None,
            t_depart: None,
            t_arrive: None,
        });
    }
    out
}

/// Triangular boarding / alighting time distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwellSampler {
    pub min: f64,
    pub mode: f64,
    pub max: f64,
}

impl Default for DwellSampler {
    fn default() -> Self {
        Self {
            min: 10.0,
            mode: 20.0,
            max: 30.0,
        }
    }
}

impl DwellSampler {
    pub fn validate(&self) -> Result<(), String> {
        if self.min <= self.mode && self.mode <= self.max && self.min >= 0.0 && self.min < self.max {
            Ok(())
        } else {
            Err(format!(
                "dwell triangle ({}, {}, {}) must satisfy 0 <= min <= mode <= max, min < max",
                self.min, self.mode, self.max
            ))
        }
    }

    /// Inverse CDF at `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> f64 {
        let (a, c, b) = (self.min, self.mode, self.max);
        let fc = (c - a) / (b - a);
        if u < fc {
            a + (u * (b - a) * (c - a)).sqrt()
        } else {
            b - ((1.0 - u) * (b - a) * (b - c)).sqrt()
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (a, c, b) = (self.min, self.mode, self.max);
        if x <= a {
            0.0
        } else if x <= c {
            (x - a) * (x - a) / ((b - a) * (c - a))
        } else if x < b {
            1.0 - (b - x) * (b - x) / ((b - a) * (b - c))
        } else {
            1.0
        }
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        self.sample(rng.gen::<f64>())
    }
}

/// An idle vehicle that could serve a group, with its nominal travel time to
/// the group's origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdleCandidate {
    pub vehicle: u32,
    pub nominal_s: f64,
}

/// Nearest idle vehicle by nominal time; ties go to the smaller vehicle id.
pub fn dispatch_vehicle(candidates: &[IdleCandidate]) -> Option<u32> {
    candidates
        .iter()
        .min_by(|a, b| {
            a.nominal_s
                .total_cmp(&b.nominal_s)
                .then(a.vehicle.cmp(&b.vehicle))
        })
        .map(|c| c.vehicle)
}

/// What a berthed vehicle is doing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BerthActivity {
    /// Just pulled in, still moving up to the front-most free berth.
    Arriving,
    /// Boarding or alighting until the given time.
    Dwelling { until: f64 },
    /// Waiting to leave from the head berth.
    Ready,
    /// Parked without a task.
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Berthed {
    pub vehicle: u32,
    pub activity: BerthActivity,
}

/// Serial berths; index 0 is the head (exit) berth.
#[derive(Debug, Clone, PartialEq)]
pub struct StationState {
    pub node: NodeIdx,
    pub berths: Vec<Option<Berthed>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BerthEvent {
    /// A vehicle stopped moving up and can start its dwell.
    Settled { vehicle: u32, slot: usize },
}

impl StationState {
    pub fn new(node: NodeIdx, berths: usize) -> Self {
        Self {
            node,
            berths: vec![None; berths],
        }
    }

    pub fn rear_free(&self) -> bool {
        self.berths.last().is_some_and(|b| b.is_none())
    }

    pub fn free_count(&self) -> usize {
        self.berths.iter().filter(|b| b.is_none()).count()
    }

    pub fn occupied(&self) -> usize {
        self.berths.len() - self.free_count()
    }

    pub fn slot_of(&self, vehicle: u32) -> Option<usize> {
        self.berths
            .iter()
            .position(|b| matches!(b, Some(x) if x.vehicle == vehicle))
    }

    pub fn get_mut(&mut self, vehicle: u32) -> Option<&mut Berthed> {
        self.berths
            .iter_mut()
            .flatten()
            .find(|b| b.vehicle == vehicle)
    }

    /// Places a vehicle in the rear berth. Returns false when it is taken.
    pub fn enter(&mut self, vehicle: u32) -> bool {
        match self.berths.last_mut() {
            Some(slot @ None) => {
                *slot = Some(Berthed {
                    vehicle,
                    activity: BerthActivity::Arriving,
                });
                true
            }
            _ => false,
        }
    }

    /// Head vehicle, if it is ready to leave.
    pub fn head_ready(&self) -> Option<u32> {
        match self.berths.first() {
            Some(Some(Berthed {
                vehicle,
                activity: BerthActivity::Ready,
            })) => Some(*vehicle),
            _ => None,
        }
    }

    pub fn take_head(&mut self) -> Option<u32> {
        self.berths.first_mut().and_then(|b| b.take()).map(|b| b.vehicle)
    }

    /// Moves each non-dwelling vehicle at most one berth towards the head
    /// and reports arrivals that can go no further.
    pub fn advance(&mut self) -> Vec<BerthEvent> {
        let mut events = Vec::new();
        let n = self.berths.len();
        let mut moved = vec![false; n];
        for k in 1..n {
            if self.berths[k - 1].is_none() {
                if let Some(b) = self.berths[k] {
                    if !matches!(b.activity, BerthActivity::Dwelling { .. }) {
                        self.berths[k - 1] = Some(b);
                        self.berths[k] = None;
                        moved[k - 1] = true;
                    }
                }
            }
        }
        for k in 0..n {
            if let Some(b) = self.berths[k] {
                if b.activity == BerthActivity::Arriving && !moved[k] {
                    let blocked = k == 0 || self.berths[k - 1].is_some();
                    if blocked {
                        events.push(BerthEvent::Settled { vehicle: b.vehicle, slot: k });
                    }
                }
            }
        }
        events
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dwell_examples() {
        let s = DwellSampler::default();
        assert_eq!(s.sample(0.5), 20.0);
        assert_eq!(s.sample(0.0), 10.0);
        // explicit branch formulas
        for u in [0.01, 0.2, 0.49] {
            assert!((s.sample(u) - (10.0 + (u * 200.0).sqrt())).abs() < 1e-12);
        }
        for u in [0.5, 0.7, 0.999] {
            assert!((s.sample(u) - (30.0 - ((1.0 - u) * 200.0).sqrt())).abs() < 1e-12);
        }
    }

    #[test]
    fn dwell_cdf_inverts_sample() {
        let s = DwellSampler::default();
        for i in 0..100 {
            let u = i as f64 / 100.0;
            assert!((s.cdf(s.sample(u)) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn dwell_monte_carlo_mean() {
        let s = DwellSampler::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = s.draw(&mut rng);
            assert!((10.0..=30.0).contains(&x));
            sum += x;
        }
        // analytic mean (10 + 20 + 30) / 3
        assert!((sum / n as f64 - 20.0).abs() < 0.1);
    }

    #[test]
    fn demand_basic_properties() {
        let st: Vec<NodeIdx> = (0..12).map(NodeIdx).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = generate_demand(&DemandConfig { groups_per_hour: 960.0 }, &st, 3600.0, &mut rng);
        assert!(g.windows(2).all(|w| w[0].t_created <= w[1].t_created));
        assert!(g.iter().all(|x| x.origin != x.dest && (1..=4).contains(&x.size)));
        assert!(g.iter().all(|x| x.t_created < 3600.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(generate_demand(&DemandConfig { groups_per_hour: 960.0 }, &st, 0.0, &mut rng).is_empty());
    }

    #[test]
    fn demand_count_concentrates() {
        // Poisson(960): mean 960, sd sqrt(960); 3 sd band holds ~99.7%
        let st: Vec<NodeIdx> = (0..12).map(NodeIdx).collect();
        let band = 3.0 * 960f64.sqrt();
        let mut inside = 0;
        let mut total = 0usize;
        let seeds = 400;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = generate_demand(&DemandConfig { groups_per_hour: 960.0 }, &st, 3600.0, &mut rng).len();
            total += n;
            if (n as f64 - 960.0).abs() <= band {
                inside += 1;
            }
        }
        assert!(inside as f64 / seeds as f64 >= 0.98, "{inside}/{seeds}");
        let mean = total as f64 / seeds as f64;
        // standard error of the mean is sqrt(960/400) ~ 1.55
        assert!((mean - 960.0).abs() < 6.0, "mean {mean}");
    }

    #[test]
    fn od_is_uniform_over_ordered_pairs() {
        let st: Vec<NodeIdx> = (0..4).map(NodeIdx).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = generate_demand(&DemandConfig { groups_per_hour: 3600.0 }, &st, 36_000.0, &mut rng);
        let mut counts = [[0u32; 4]; 4];
        for x in &g {
            counts[x.origin.ix()][x.dest.ix()] += 1;
        }
        let expect = g.len() as f64 / 12.0;
        for (o, row) in counts.iter().enumerate() {
            for (d, &c) in row.iter().enumerate() {
                if o == d {
                    assert_eq!(c, 0);
                } else {
                    assert!((c as f64 - expect).abs() < 5.0 * expect.sqrt());
                }
            }
        }
    }

    #[test]
    fn dispatch_examples() {
        assert_eq!(dispatch_vehicle(&[IdleCandidate { vehicle: 3, nominal_s: 900.0 }]), Some(3));
        assert_eq!(
            dispatch_vehicle(&[
                IdleCandidate { vehicle: 1, nominal_s: 100.0 },
                IdleCandidate { vehicle: 2, nominal_s: 60.0 },
            ]),
            Some(2)
        );
        assert_eq!(
            dispatch_vehicle(&[
                IdleCandidate { vehicle: 9, nominal_s: 60.0 },
                IdleCandidate { vehicle: 4, nominal_s: 60.0 },
            ]),
            Some(4)
        );
        assert_eq!(dispatch_vehicle(&[]), None);
    }

    #[test]
    fn berths_fill_serially() {
        let mut st = StationState::new(NodeIdx(0), 5);
        assert!(st.enter(1));
        assert!(!st.enter(2));
        // the owner acts on a settle event by leaving the arriving state
        let mut settled = Vec::new();
        for _ in 0..6 {
            for e in st.advance() {
                let BerthEvent::Settled { vehicle, .. } = e;
                st.get_mut(vehicle).unwrap().activity = BerthActivity::Idle;
                settled.push(e);
            }
        }
        assert_eq!(st.slot_of(1), Some(0));
        assert_eq!(settled, vec![BerthEvent::Settled { vehicle: 1, slot: 0 }]);

        // a dwelling vehicle blocks the one behind it
        st.get_mut(1).unwrap().activity = BerthActivity::Dwelling { until: 10.0 };
        assert!(st.enter(2));
        let mut ev = Vec::new();
        for _ in 0..6 {
            for e in st.advance() {
                let BerthEvent::Settled { vehicle, .. } = e;
                st.get_mut(vehicle).unwrap().activity = BerthActivity::Idle;
                ev.push(e);
            }
        }
        assert_eq!(st.slot_of(2), Some(1));
        assert_eq!(ev, vec![BerthEvent::Settled { vehicle: 2, slot: 1 }]);
        assert_eq!(st.head_ready(), None);
        st.get_mut(1).unwrap().activity = BerthActivity::Ready;
        assert_eq!(st.head_ready(), Some(1));
        assert_eq!(st.take_head(), Some(1));
        assert_eq!(st.free_count(), 4);
    }
}
