use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::Args;
use migrate_sim_core::ctmc::{simulate_open, write_sojourns_csv};
use migrate_sim_core::experiments::{
    cell_seeds, predicted_throughput, stability_probe, throughput_estimate_with_warmup, Verdict, MIN_REPS,
    WARMUP_FRACTION,
};
use migrate_sim_core::{Error, Policy, Result, SystemConfig, SystemState};
use serde::Serialize;
use serde_json::json;

use crate::manifest::RunManifest;
use crate::{broadcast, resolve_m, warn, write_table, Global, Outcome, ServerArgs};

#[derive(Debug, Clone, Args)]
pub struct OpenArgs {
    #[command(flatten)]
    pub server: ServerArgs,

    /// Arrival rates, scalar or comma-separated list.
    #[arg(long, value_delimiter = ',', required_unless_present = "config")]
    pub lambda: Vec<f64>,

    /// Per-server occupancy bound; arrivals to a full server are dropped.
    #[arg(long)]
    pub cap: Option<u32>,

    /// Simulated time per replication.
    #[arg(long, default_value_t = 2000.0)]
    pub horizon: f64,

    /// Sojourns of clients arriving before this time are discarded
    /// (default: 20% of the horizon).
    #[arg(long)]
    pub warmup: Option<f64>,

    /// Replications.
    #[arg(long, default_value_t = 20)]
    pub reps: usize,

    /// Also run the stability probe (population growth over the last half).
    #[arg(long)]
    pub probe: bool,

    /// Write the trajectory and sojourn records of the first replication.
    #[arg(long)]
    pub trace: bool,

    /// Spacing of trajectory snapshots.
    #[arg(long)]
    pub sample_interval: Option<f64>,

    /// TOML system description; replaces the server flags and --lambda.
    #[arg(long, conflicts_with_all = ["m", "mu", "beta", "policy", "lambda", "cap"])]
    pub config: Option<PathBuf>,
}

fn system(args: &OpenArgs) -> Result<SystemConfig> {
    let mut cfg = match &args.config {
        Some(path) => SystemConfig::from_file(path)?,
        None => {
            let s = &args.server;
            let m = resolve_m(s.m, &[("lambda", &args.lambda), ("mu", &s.mu)])?;
            let cfg = SystemConfig::new(
                broadcast("mu", &s.mu, m)?,
                broadcast("lambda", &args.lambda, m)?,
                s.beta.unwrap_or(0.5),
                s.policy.unwrap_or(Policy::Rlo),
            )?;
            match args.cap {
                Some(b) => cfg.with_cap(b)?,
                None => cfg,
            }
        }
    };
    if let Some(dt) = args.sample_interval {
        cfg = cfg.with_sample_interval(dt)?;
    }
    if cfg.is_closed() {
        return Err(Error::Config { key: "lambda".into(), message: "open runs need a positive arrival rate".into() });
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct ThroughputLine {
    m: usize,
    policy: String,
    total_lambda: f64,
    beta: f64,
    horizon: f64,
    warmup: f64,
    reps: usize,
    completed: usize,
    mean_sojourn: f64,
    sojourn_sd: f64,
    throughput: f64,
    ci_lo: f64,
    ci_hi: f64,
    prediction: Option<f64>,
    rel_error: Option<f64>,
}

#[derive(Serialize)]
struct StabilityLine {
    m: usize,
    policy: String,
    total_lambda: f64,
    total_mu: f64,
    horizon: f64,
    seeds: usize,
    verdict: Verdict,
    slope: f64,
    slope_ci_lo: f64,
    slope_ci_hi: f64,
    q3_mean: f64,
    q4_mean: f64,
    tail_gap: f64,
}

/// Mean-field prediction for homogeneous unit-capacity systems.
fn prediction(cfg: &SystemConfig) -> Option<f64> {
    let lambda = cfg.lambda()[0];
    let homogeneous_unit = cfg.is_homogeneous() && cfg.mu().iter().all(|&m| m == 1.0);
    if !homogeneous_unit || cfg.cap().is_some() || cfg.q_matrix().is_some() || !(lambda > 0.0 && lambda < 1.0) {
        return None;
    }
    predicted_throughput(lambda, cfg.beta(), cfg.policy()).ok()
}

pub(crate) fn run(args: &OpenArgs, global: &Global) -> Result<Outcome> {
    let cfg = system(args)?;
    let warmup = args.warmup.unwrap_or(WARMUP_FRACTION * args.horizon);
    if !(args.horizon > 0.0 && warmup >= 0.0 && warmup < args.horizon) {
        return Err(Error::InvalidArgument(format!("need 0 <= warmup < horizon (got {warmup}, {})", args.horizon)));
    }
    let overloaded = cfg.total_lambda() >= cfg.total_mu();
    let estimate_throughput = !overloaded;
    if estimate_throughput && args.reps < MIN_REPS {
        return Err(Error::InvalidArgument(format!("--reps {} is below the minimum of {MIN_REPS} for confidence intervals", args.reps)));
    }
    if args.probe && args.reps < 2 {
        return Err(Error::InvalidArgument("the stability probe needs --reps >= 2".into()));
    }
    let seeds = cell_seeds(global.seed, 0, args.reps);
    let mut manifest = RunManifest::start(
        "open",
        global,
        &json!({
            "system": cfg,
            "horizon": args.horizon,
            "warmup": warmup,
            "reps": args.reps,
            "probe": args.probe,
            "trace": args.trace,
        }),
        (seeds[0], *seeds.last().unwrap_or(&seeds[0])),
    )?;
    let comments = [("seed", global.seed.to_string()), ("m", cfg.m().to_string()), ("policy", cfg.policy().to_string())];
    let mut outcome = Outcome::Ok;
    println!("m={} policy={} total lambda={} total mu={} beta={}", cfg.m(), cfg.policy(), cfg.total_lambda(), cfg.total_mu(), cfg.beta());

    if overloaded {
        warn(&format!(
            "total arrival rate {} >= total capacity {}: the system cannot be stable and sojourn statistics are unreliable{}",
            cfg.total_lambda(),
            cfg.total_mu(),
            if args.probe { "" } else { "; rerun with --probe for a stability verdict" }
        ));
        outcome = Outcome::Warnings;
    } else {
        let est = throughput_estimate_with_warmup(&cfg, args.horizon, warmup, &seeds, global.jobs)?;
        let pred = prediction(&cfg);
        let line = ThroughputLine {
            m: cfg.m(),
            policy: cfg.policy().to_string(),
            total_lambda: cfg.total_lambda(),
            beta: cfg.beta(),
            horizon: args.horizon,
            warmup,
            reps: est.reps,
            completed: est.completed,
            mean_sojourn: est.mean_sojourn,
            sojourn_sd: est.sojourn_sd,
            throughput: est.throughput,
            ci_lo: est.ci_lo,
            ci_hi: est.ci_hi,
            prediction: pred,
            rel_error: pred.map(|p| (est.throughput - p).abs() / p),
        };
        write_table(&manifest.output("throughput.csv"), &comments, &[line])?;
        println!(
            "throughput {:.6}  95% CI [{:.6}, {:.6}]  mean sojourn {:.6}  ({} sojourns)",
            est.throughput, est.ci_lo, est.ci_hi, est.mean_sojourn, est.completed
        );
        if let Some(p) = pred {
            println!("mean-field prediction {p:.6}  relative error {:.4}", (est.throughput - p).abs() / p);
        }
    }

    if args.probe {
        let report = stability_probe(&cfg, args.horizon, &seeds, global.jobs)?;
        let line = StabilityLine {
            m: cfg.m(),
            policy: cfg.policy().to_string(),
            total_lambda: cfg.total_lambda(),
            total_mu: cfg.total_mu(),
            horizon: args.horizon,
            seeds: seeds.len(),
            verdict: report.verdict,
            slope: report.growth_slope.mean,
            slope_ci_lo: report.growth_slope.ci_lo,
            slope_ci_hi: report.growth_slope.ci_hi,
            q3_mean: report.tail_means.0,
            q4_mean: report.tail_means.1,
            tail_gap: report.tail_gap,
        };
        write_table(&manifest.output("stability.csv"), &comments, &[line])?;
        println!(
            "stability: {}  slope {:.4} [{:.4}, {:.4}]  tail means {:.3} / {:.3}",
            report.verdict.as_str(),
            report.growth_slope.mean,
            report.growth_slope.ci_lo,
            report.growth_slope.ci_hi,
            report.tail_means.0,
            report.tail_means.1
        );
        if report.verdict == Verdict::Inconclusive {
            warn("stability verdict is inconclusive; try a longer --horizon or more --reps");
            outcome = Outcome::Warnings;
        }
    }

    if args.trace {
        let run = simulate_open(&cfg, &SystemState::empty(cfg.m()), args.horizon, warmup, seeds[0])?;
        run.trajectory.write_csv(BufWriter::new(File::create(manifest.output("trajectory.csv"))?))?;
        write_sojourns_csv(&run.sojourns, seeds[0], BufWriter::new(File::create(manifest.output("sojourns.csv"))?))?;
    }

    println!("results in {}", manifest.dir().display());
    manifest.finish(if outcome == Outcome::Ok { "ok" } else { "warnings" })?;
    Ok(outcome)
}
