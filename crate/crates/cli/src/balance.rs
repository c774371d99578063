use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use migrate_sim_core::balance::{
    lower_bound_estimates, measure_balance_time, theorem1_bound, write_balance_csv, BalanceRow, BalanceRunOptions,
    BalanceStop, InitialLayout,
};
use migrate_sim_core::{Error, Policy, Result, SystemConfig};
use serde::Serialize;
use serde_json::json;

use crate::manifest::RunManifest;
use crate::{broadcast, resolve_m, warn, write_table, Global, Outcome, ServerArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitialArg {
    /// Every client on server 1.
    AllAtOne,
    /// Each client on an independent uniformly random server.
    Uniform,
    /// Counts read from --layout.
    File,
}

#[derive(Debug, Clone, Args)]
pub struct BalanceArgs {
    #[command(flatten)]
    pub server: ServerArgs,

    /// Number of clients.
    #[arg(long)]
    pub n: u64,

    /// Initial placement of the clients.
    #[arg(long, value_enum, default_value_t = InitialArg::AllAtOne)]
    pub initial: InitialArg,

    /// File with one count per server (comma or whitespace separated).
    #[arg(long, required_if_eq("initial", "file"))]
    pub layout: Option<PathBuf>,

    /// Stopping rule: `exact` or `eps=<value>`.
    #[arg(long, default_value = "exact", value_parser = parse_stop)]
    pub stop: BalanceStop,

    /// Replications.
    #[arg(long, default_value_t = 200)]
    pub reps: usize,

    /// Censoring horizon per replication (default: 100 times the bound).
    #[arg(long)]
    pub horizon: Option<f64>,

    /// TOML system description; replaces --m, --mu, --beta and --policy.
    #[arg(long, conflicts_with_all = ["m", "mu", "beta", "policy"])]
    pub config: Option<PathBuf>,
}

pub(crate) fn parse_stop(s: &str) -> std::result::Result<BalanceStop, String> {
    if s == "exact" {
        return Ok(BalanceStop::Exact);
    }
    let v = s.strip_prefix("eps=").ok_or_else(|| format!("expected `exact` or `eps=<value>`, got `{s}`"))?;
    let eps: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(format!("eps must lie in (0, 1), got {eps}"));
    }
    Ok(BalanceStop::Eps(eps))
}

fn read_layout(path: &PathBuf) -> Result<Vec<u32>> {
    let text = fs::read_to_string(path)?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<u32>().map_err(|_| Error::Config {
                key: "layout".into(),
                message: format!("`{t}` in {} is not a client count", path.display()),
            })
        })
        .collect()
}

fn system(args: &BalanceArgs, custom: Option<&[u32]>) -> Result<SystemConfig> {
    if let Some(path) = &args.config {
        let cfg = SystemConfig::from_file(path)?;
        if !cfg.is_closed() {
            return Err(Error::Config { key: "lambda".into(), message: "balance runs need a closed system (all zero)".into() });
        }
        return Ok(cfg);
    }
    let s = &args.server;
    let m = match (s.m, custom) {
        (None, Some(c)) => c.len(),
        _ => resolve_m(s.m, &[("mu", &s.mu)])?,
    };
    let mu = broadcast("mu", &s.mu, m)?;
    SystemConfig::new(mu, vec![0.0; m], s.beta.unwrap_or(1.0), s.policy.unwrap_or(Policy::Rls))
}

#[derive(Serialize)]
struct TimeRow {
    rep: usize,
    seed: u64,
    time: f64,
    censored: bool,
}

pub(crate) fn run(args: &BalanceArgs, global: &Global) -> Result<Outcome> {
    let custom = match args.initial {
        InitialArg::File => Some(read_layout(args.layout.as_ref().expect("required by clap"))?),
        _ => None,
    };
    let config = system(args, custom.as_deref())?;
    let initial = match (args.initial, custom) {
        (InitialArg::AllAtOne, _) => InitialLayout::AllAtOne,
        (InitialArg::Uniform, _) => InitialLayout::UniformRandom,
        (InitialArg::File, Some(c)) => InitialLayout::Custom(c),
        (InitialArg::File, None) => unreachable!("layout read above"),
    };
    let m = config.m();
    let bound = theorem1_bound(m.max(2), args.n.max(1))?;
    let lower = lower_bound_estimates(m, args.n)?;
    let seeds = (global.seed, global.seed.wrapping_add(args.reps.saturating_sub(1) as u64));
    let mut manifest = RunManifest::start(
        "balance",
        global,
        &json!({
            "system": config,
            "n": args.n,
            "initial": args.initial.to_possible_value().map(|v| v.get_name().to_string()),
            "stop": args.stop.label(),
            "reps": args.reps,
            "horizon": args.horizon,
        }),
        seeds,
    )?;

    let opts = BalanceRunOptions { horizon: args.horizon, jobs: global.jobs };
    let result = measure_balance_time(&config, args.n, &initial, args.stop, args.reps, global.seed, &opts)?;
    let row = BalanceRow::new(&result, &config, &initial, args.stop)?;
    write_balance_csv(std::slice::from_ref(&row), global.seed, BufWriter::new(File::create(manifest.output("balance.csv"))?))?;
    let times: Vec<TimeRow> = result
        .times
        .iter()
        .enumerate()
        .map(|(rep, &time)| TimeRow { rep, seed: global.seed.wrapping_add(rep as u64), time, censored: time >= result.horizon })
        .collect();
    write_table(&manifest.output("times.csv"), &[("seed", global.seed.to_string())], &times)?;

    println!("m={m} n={} policy={} stop={} reps={}", args.n, config.policy(), args.stop.label(), args.reps);
    match result.summary {
        Some(s) => println!("mean time {:.6}  95% CI [{:.6}, {:.6}]  sd {:.6}", s.mean, s.ci_lo, s.ci_hi, s.sd),
        None => println!("mean time undefined: fewer than two replications finished"),
    }
    println!("upper bound {bound:.6}  lower bounds: ln m = {:.6}, m^2/(m+n) = {:.6}", lower.all_at_one, lower.last_move);
    println!("results in {}", manifest.dir().display());

    let outcome = if result.censored > 0 {
        warn(&format!("{} of {} replications hit the horizon {} and were censored", result.censored, args.reps, result.horizon));
        Outcome::Warnings
    } else {
        Outcome::Ok
    };
    manifest.finish(if outcome == Outcome::Ok { "ok" } else { "censored" })?;
    Ok(outcome)
}
