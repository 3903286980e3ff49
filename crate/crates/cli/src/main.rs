mod charts;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use prt_core::engine::{apply_setting, parse_config, SimConfig, SimResult, Simulation};
use prt_core::experiments::{
    compare_policies, seed_list, sweep_saturation, write_compare_csv, write_sweep_csv, DEFAULT_COMPARE_DEMANDS,
    DEFAULT_SWEEP_COUNTS, DEFAULT_THRESHOLD_PCT,
};
use prt_core::merge::PriorityPolicy;
use prt_core::metrics::{write_trips_csv, Saturation};

#[derive(Parser)]
#[command(name = "prtsim", version, about = "Deterministic PRT network simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trip records.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Per-tick vehicle trace (single seed only).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sweep the fleet size and locate the ASD saturation point.
    SweepSaturation {
        #[command(flatten)]
        run: RunArgs,
        /// Fleet sizes to simulate.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP_COUNTS)]
        counts: Vec<u32>,
        /// ASD threshold, percent.
        #[arg(long, default_value_t = DEFAULT_THRESHOLD_PCT)]
        threshold: f64,
    },
    /// Run every merge policy at several demand levels on paired seeds.
    ComparePolicies {
        #[command(flatten)]
        run: RunArgs,
        /// Demand levels, groups per hour.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_COMPARE_DEMANDS)]
        demands: Vec<f64>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `city` or a network file.
    #[arg(long)]
    network: Option<String>,
    #[arg(long)]
    vehicles: Option<u32>,
    /// highway|road|slider
    #[arg(long)]
    policy: Option<String>,
    /// Groups per hour.
    #[arg(long)]
    demand: Option<f64>,
    /// static|dynamic
    #[arg(long)]
    routing: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Seconds excluded from the metrics.
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Worker threads, 0 for all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl RunArgs {
    fn config(&self) -> Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                parse_config(&text).with_context(|| format!("in {}", p.display()))?
            }
            None => SimConfig::default(),
        };
        let flags: [(&str, Option<String>); 12] = [
            ("network", self.network.clone()),
            ("vehicles", self.vehicles.map(|v| v.to_string())),
            ("policy", self.policy.clone()),
            ("demand", self.demand.map(|v| v.to_string())),
            ("routing", self.routing.clone()),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("gamma", self.gamma.map(|v| v.to_string())),
            ("duration", self.duration.map(|v| v.to_string())),
            ("warmup", self.warmup.map(|v| v.to_string())),
            ("dt", self.dt.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                apply_setting(&mut cfg, key, &v).map_err(|e| anyhow::anyhow!("--{key}: {e}"))?;
            }
        }
        Ok(cfg)
    }

    fn seeds(&self, cfg: &SimConfig, default: usize) -> Result<Vec<u64>> {
        let k = self.seeds.unwrap_or(default);
        if k == 0 {
            bail!("--seeds must be at least 1");
        }
        Ok(seed_list(cfg.seed, k))
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let p = dir.join(name);
    Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
}

fn fmt_opt(x: Option<f64>, unit: &str) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}{unit}"))
}

fn summary(cfg: &SimConfig, r: &SimResult) {
    let c = &r.counts;
    println!(
        "seed {}: {} vehicles, policy {}, {} groups/h",
        cfg.seed, cfg.n_vehicles, cfg.policy, cfg.demand.groups_per_hour
    );
    println!(
        "  groups: generated {} served {} riding {} waiting {} queued {}",
        c.generated, c.served, c.riding, c.waiting, c.queued
    );
    println!(
        "  measured trips {}  ASD {}  mean wait {}",
        r.served_measured(),
        fmt_opt(r.asd_pct, "%"),
        fmt_opt(r.avg_wait_s, " s")
    );
    println!(
        "  min gap {:.2} m  separation violations {}  merge violations {}  berth overflows {}  detours {}",
        r.min_gap, r.separation_violations, r.merge_violations, r.berth_overflows, r.detours
    );
}

fn simulate(run: &RunArgs, trace: Option<&Path>) -> Result<()> {
    let base = run.config()?;
    let seeds = run.seeds(&base, 1)?;
    if trace.is_some() && seeds.len() > 1 {
        bail!("--trace needs a single seed");
    }
    let net = base.network.load()?;
    fs::create_dir_all(&run.out)?;
    for &seed in &seeds {
        let cfg = SimConfig { seed, ..base.clone() };
        let sim = Simulation::new(&net, &cfg);
        let result = match trace {
            Some(p) => {
                let w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
                sim.with_trace(w).run()?
            }
            None => sim.run()?,
        };
        let name = if seeds.len() == 1 {
            "trips.csv".to_string()
        } else {
            format!("trips_seed{seed}.csv")
        };
        let mut w = create(&run.out, &name)?;
        write_trips_csv(&mut w, &result.trips)?;
        w.flush()?;
        summary(&cfg, &result);
    }
    Ok(())
}

fn sweep(run: &RunArgs, counts: &[u32], threshold: f64) -> Result<()> {
    let base = run.config()?;
    let seeds = run.seeds(&base, 3)?;
    let net = base.network.load()?;
    let res = sweep_saturation(&net, &base, counts, &seeds, threshold, run.threads)?;
    fs::create_dir_all(&run.out)?;
    let mut w = create(&run.out, "sweep.csv")?;
    write_sweep_csv(&mut w, &res.rows)?;
    w.flush()?;
    fs::write(run.out.join("sweep.svg"), charts::sweep_svg(&res).map_err(|e| anyhow::anyhow!("{e}"))?)?;
    for (n, a) in &res.points {
        println!("{n:>5} vehicles  mean ASD {a:6.2}%");
    }
    match res.saturation {
        Saturation::At(n) => println!("saturation at {n:.1} vehicles (threshold {threshold}%)"),
        Saturation::NotSaturated => println!("threshold {threshold}% not reached"),
    }
    Ok(())
}

fn compare(run: &RunArgs, demands: &[f64]) -> Result<()> {
    let base = run.config()?;
    let seeds = run.seeds(&base, 5)?;
    let net = base.network.load()?;
    let policies = PriorityPolicy::ALL;
    let res = compare_policies(&net, &base, &policies, demands, &seeds, run.threads)?;
    fs::create_dir_all(&run.out)?;
    let mut w = create(&run.out, "compare.csv")?;
    write_compare_csv(&mut w, &res.rows)?;
    w.flush()?;
    fs::write(
        run.out.join("compare.svg"),
        charts::compare_svg(&res, &policies, demands).map_err(|e| anyhow::anyhow!("{e}"))?,
    )?;
    for c in &res.cells {
        println!(
            "{:>7} {:>6} groups/h  ASD {:>9}  wait {:>9}",
            c.policy.as_str(),
            c.demand_gph,
            fmt_opt(c.mean_asd_pct, "%"),
            fmt_opt(c.mean_wait_s, " s")
        );
    }
    for &d in demands {
        for other in [PriorityPolicy::RoadFirst, PriorityPolicy::Slider] {
            if let Some(g) = res.relative_wait_gain(PriorityPolicy::HighwayFirst, other, d) {
                println!("{d} groups/h: {other} wait vs highway {:+.1}%", -100.0 * g);
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.cmd {
        Command::Simulate { run, trace } => simulate(run, trace.as_deref()),
        Command::SweepSaturation { run, counts, threshold } => sweep(run, counts, *threshold),
        Command::ComparePolicies { run, demands } => compare(run, demands),
    }
}
