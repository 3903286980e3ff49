//! Batch experiments: the vehicle-count sweep and the policy comparison.
//!
//! Runs are independent and may execute on a thread pool, but results are
//! always collected in (scenario, seed) order, so the output does not depend
//! on the thread count.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{run, GroupCounts, SimConfig, SimError, SimResult};
use crate::merge::PriorityPolicy;
use crate::metrics::{find_saturation, mean, Saturation, SaturationError};
use crate::network::Network;

pub const DEFAULT_SWEEP_COUNTS: [u32; 9] = [48, 72, 96, 120, 144, 192, 240, 280, 320];
pub const DEFAULT_THRESHOLD_PCT: f64 = 25.0;
pub const DEFAULT_COMPARE_DEMANDS: [f64; 3] = [320.0, 480.0, 960.0];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("run {label} failed: {source}")]
    Run {
        label: String,
        #[source]
        source: SimError,
    },
    #[error(transparent)]
    Saturation(#[from] SaturationError),
    #[error("cannot build thread pool: {0}")]
    Pool(String),
    #[error("{0}")]
    Invalid(String),
}

/// `k` consecutive seeds starting at `first`.
pub fn seed_list(first: u64, k: usize) -> Vec<u64> {
    (0..k as u64).map(|i| first.wrapping_add(i)).collect()
}

/// Runs every config and returns the results in input order. `threads == 0`
/// uses the global pool.
pub fn run_batch(
    net: &Network,
    cfgs: &[SimConfig],
    threads: usize,
) -> Result<Vec<Result<SimResult, SimError>>, ExperimentError> {
    let work = || cfgs.par_iter().map(|c| run(net, c)).collect::<Vec<_>>();
    if threads == 0 {
        return Ok(work());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    Ok(pool.install(work))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_vehicles: u32,
    pub seed: u64,
    pub asd_pct: Option<f64>,
    pub avg_wait_s: Option<f64>,
    pub counts: GroupCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// (vehicle count, mean ASD over seeds), in count order.
    pub points: Vec<(f64, f64)>,
    pub threshold: f64,
    pub saturation: Saturation,
}

pub fn sweep_saturation(
    net: &Network,
    base: &SimConfig,
    counts: &[u32],
    seeds: &[u64],
    threshold: f64,
    threads: usize,
) -> Result<SweepResult, ExperimentError> {
    if counts.is_empty() || seeds.is_empty() {
        return Err(ExperimentError::Invalid("sweep needs at least one vehicle count and one seed".into()));
    }
    let mut counts = counts.to_vec();
    counts.sort_unstable();
    counts.dedup();
    let mut cfgs = Vec::new();
    for &n in &counts {
        for &seed in seeds {
            cfgs.push(SimConfig {
                n_vehicles: n,
                seed,
                ..base.clone()
            });
        }
    }
    let results = run_batch(net, &cfgs, threads)?;
    let mut rows = Vec::with_capacity(results.len());
    for (c, r) in cfgs.iter().zip(results) {
        let r = r.map_err(|source| ExperimentError::Run {
            label: format!("n={} seed={}", c.n_vehicles, c.seed),
            source,
        })?;
        rows.push(SweepRow {
            n_vehicles: c.n_vehicles,
            seed: c.seed,
            asd_pct: r.asd_pct,
            avg_wait_s: r.avg_wait_s,
            counts: r.counts,
        });
    }
    let points: Vec<(f64, f64)> = counts
        .iter()
        .filter_map(|&n| {
            let v: Vec<f64> = rows.iter().filter(|r| r.n_vehicles == n).filter_map(|r| r.asd_pct).collect();
            mean(&v).map(|m| (n as f64, m))
        })
        .collect();
    let saturation = find_saturation(&points, threshold)?;
    Ok(SweepResult {
        rows,
        points,
        threshold,
        saturation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub policy: PriorityPolicy,
    pub demand_gph: f64,
    pub seed: u64,
    pub asd_pct: Option<f64>,
    pub avg_wait_s: Option<f64>,
    pub counts: GroupCounts,
}

/// Seed means for one (policy, demand) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareCell {
    pub policy: PriorityPolicy,
    pub demand_gph: f64,
    pub mean_asd_pct: Option<f64>,
    pub mean_wait_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareResult {
    pub rows: Vec<CompareRow>,
    /// Demand-major, policies in the order given.
    pub cells: Vec<CompareCell>,
}

impl CompareResult {
    pub fn cell(&self, policy: PriorityPolicy, demand_gph: f64) -> Option<&CompareCell> {
        self.cells.iter().find(|c| c.policy == policy && c.demand_gph == demand_gph)
    }

    /// Paired-seed mean of `(wait(base) - wait(other)) / wait(base)`.
    pub fn relative_wait_gain(&self, base: PriorityPolicy, other: PriorityPolicy, demand_gph: f64) -> Option<f64> {
        let pick = |p: PriorityPolicy| {
            self.rows
                .iter()
                .filter(move |r| r.policy == p && r.demand_gph == demand_gph)
        };
        let gains: Vec<f64> = pick(base)
            .filter_map(|b| {
                let o = pick(other).find(|o| o.seed == b.seed)?;
                let (wb, wo) = (b.avg_wait_s?, o.avg_wait_s?);
                (wb > 0.0).then(|| (wb - wo) / wb)
            })
            .collect();
        mean(&gains)
    }
}

pub fn compare_policies(
    net: &Network,
    base: &SimConfig,
    policies: &[PriorityPolicy],
    demands: &[f64],
    seeds: &[u64],
    threads: usize,
) -> Result<CompareResult, ExperimentError> {
    if policies.is_empty() || demands.is_empty() || seeds.is_empty() {
        return Err(ExperimentError::Invalid("comparison needs policies, demands and seeds".into()));
    }
    let mut cfgs = Vec::new();
    for &d in demands {
        for &p in policies {
            for &seed in seeds {
                let mut c = SimConfig {
                    policy: p,
                    seed,
                    ..base.clone()
                };
                c.demand.groups_per_hour = d;
                cfgs.push(c);
            }
        }
    }
    let results = run_batch(net, &cfgs, threads)?;
    let mut rows = Vec::with_capacity(results.len());
    for (c, r) in cfgs.iter().zip(results) {
        let r = r.map_err(|source| ExperimentError::Run {
            label: format!("policy={} demand={} seed={}", c.policy, c.demand.groups_per_hour, c.seed),
            source,
        })?;
        rows.push(CompareRow {
            policy: c.policy,
            demand_gph: c.demand.groups_per_hour,
            seed: c.seed,
            asd_pct: r.asd_pct,
            avg_wait_s: r.avg_wait_s,
            counts: r.counts,
        });
    }
    let mut cells = Vec::new();
    for &d in demands {
        for &p in policies {
            let here: Vec<&CompareRow> = rows.iter().filter(|r| r.policy == p && r.demand_gph == d).collect();
            let asd: Vec<f64> = here.iter().filter_map(|r| r.asd_pct).collect();
            let wait: Vec<f64> = here.iter().filter_map(|r| r.avg_wait_s).collect();
            cells.push(CompareCell {
                policy: p,
                demand_gph: d,
                mean_asd_pct: mean(&asd),
                mean_wait_s: mean(&wait),
            });
        }
    }
    Ok(CompareResult { rows, cells })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.4}"))
}

pub const SWEEP_HEADER: &str = "n_vehicles,seed,asd_pct,avg_wait_s";
pub const COMPARE_HEADER: &str = "policy,demand_gph,seed,asd_pct,avg_wait_s";

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.n_vehicles, r.seed, opt(r.asd_pct), opt(r.avg_wait_s))?;
    }
    Ok(())
}

pub fn write_compare_csv<W: Write>(mut w: W, rows: &[CompareRow]) -> io::Result<()> {
    writeln!(w, "{COMPARE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.policy,
            r.demand_gph,
            r.seed,
            opt(r.asd_pct),
            opt(r.avg_wait_s)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_consecutive() {
        assert_eq!(seed_list(7, 3), vec![7, 8, 9]);
        assert!(seed_list(1, 0).is_empty());
    }

    #[test]
    fn empty_inputs_rejected() {
        let net = crate::network::build_city_benchmark();
        let cfg = SimConfig::default();
        assert!(sweep_saturation(&net, &cfg, &[], &[1], 25.0, 1).is_err());
        assert!(compare_policies(&net, &cfg, &PriorityPolicy::ALL, &[480.0], &[], 1).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut out = Vec::new();
        write_sweep_csv(
            &mut out,
            &[SweepRow {
                n_vehicles: 48,
                seed: 1,
                asd_pct: Some(15.29),
                avg_wait_s: None,
                counts: GroupCounts::default(),
            }],
        )
        .unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "n_vehicles,seed,asd_pct,avg_wait_s\n48,1,15.2900,\n");
        let mut out = Vec::new();
        write_compare_csv(
            &mut out,
            &[CompareRow {
                policy: PriorityPolicy::Slider,
                demand_gph: 960.0,
                seed: 2,
                asd_pct: Some(1.0),
                avg_wait_s: Some(2.5),
                counts: GroupCounts::default(),
            }],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "policy,demand_gph,seed,asd_pct,avg_wait_s\nslider,960,2,1.0000,2.5000\n"
        );
    }

    #[test]
    fn paired_gain() {
        let row = |policy, seed, w| CompareRow {
            policy,
            demand_gph: 960.0,
            seed,
            asd_pct: None,
            avg_wait_s: Some(w),
            counts: GroupCounts::default(),
        };
        let r = CompareResult {
            rows: vec![
                row(PriorityPolicy::HighwayFirst, 1, 100.0),
                row(PriorityPolicy::HighwayFirst, 2, 200.0),
                row(PriorityPolicy::RoadFirst, 1, 90.0),
                row(PriorityPolicy::RoadFirst, 2, 150.0),
            ],
            cells: Vec::new(),
        };
        // (0.10 + 0.25) / 2
        let g = r
            .relative_wait_gain(PriorityPolicy::HighwayFirst, PriorityPolicy::RoadFirst, 960.0)
            .unwrap();
        assert!((g - 0.175).abs() < 1e-12);
        assert_eq!(r.relative_wait_gain(PriorityPolicy::HighwayFirst, PriorityPolicy::Slider, 960.0), None);
    }
}
