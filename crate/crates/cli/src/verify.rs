use clap::{Args, FromArgMatches, Subcommand};
use migrate_sim_core::experiments::{
    cell_seeds, coupling_check, drift_table, kurtz_deviation, monotonicity_check, KurtzOptions, MonotonicitySetup,
};
use migrate_sim_core::stats::{replicate, summarize};
use migrate_sim_core::{Error, Policy, Result, SystemConfig};
use serde::Serialize;
use serde_json::json;

use crate::manifest::RunManifest;
use crate::{write_table, Global, Outcome};

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(subcommand)]
    pub target: Target,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Target {
    /// Coloured-client coupling: Poisson law of red+green, mean of blue+red.
    Coupling(CouplingArgs),
    /// Deviation of the simulated empirical measure from the RLO ODE.
    Kurtz(KurtzArgs),
    /// Exhaustive RLS drift of f(n) = sum max(eps, n_i) outside the finite set.
    Lyapunov(LyapunovArgs),
    /// Stochastic-order preservation and monotone convergence of the RLO ODE.
    Monotone(MonotoneArgs),
    /// Every check above with default settings.
    All,
}

impl Target {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Target::Coupling(_) => "coupling",
            Target::Kurtz(_) => "kurtz",
            Target::Lyapunov(_) => "lyapunov",
            Target::Monotone(_) => "monotone",
            Target::All => "all",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CouplingArgs {
    /// Number of independent runs.
    #[arg(long, default_value_t = 10_000)]
    pub seeds: usize,
    /// Observation time.
    #[arg(long, default_value_t = 2.0)]
    pub t: f64,
    /// Initial blue clients per server.
    #[arg(long, value_delimiter = ',', default_value = "5,5")]
    pub blue: Vec<u64>,
    /// Arrival rates of the shared (l) stream per server.
    #[arg(long, value_delimiter = ',', default_value = "1,1")]
    pub ell: Vec<f64>,
    /// Rates of the red-making (rho) stream per server.
    #[arg(long, value_delimiter = ',', default_value = "1,1")]
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KurtzArgs {
    /// System sizes to compare, increasing.
    #[arg(long, value_delimiter = ',', default_value = "100,1000")]
    pub m_list: Vec<usize>,
    /// Seeds per system size.
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    #[arg(long, default_value_t = 20.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 0.8)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    /// Required mean deviation at the largest size.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LyapunovArgs {
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    /// Enumerate every state with max_i n_i up to this value.
    #[arg(long, default_value_t = 12)]
    pub max_n: u32,
    #[arg(long, default_value_t = 0.2)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MonotoneArgs {
    #[arg(long, default_value_t = 0.8)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 30)]
    pub bcap: usize,
    /// Random ordered pairs of initial conditions.
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,
    /// Required L1 distance of both extreme starts to the fixed point.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

/// Flag defaults of an argument group, as if no flag were given.
fn defaults<A: Args + FromArgMatches>() -> A {
    let matches = A::augment_args(clap::Command::new("defaults"))
        .try_get_matches_from(["defaults"])
        .expect("every flag has a default");
    A::from_arg_matches(&matches).expect("defaults are valid")
}

#[derive(Debug, Clone, Serialize)]
struct Check {
    check: &'static str,
    passed: bool,
    detail: String,
}

fn coupling(args: &CouplingArgs, global: &Global, manifest: &mut RunManifest) -> Result<Check> {
    let m = args.blue.len();
    if m < 2 || args.ell.len() != m || args.rho.len() != m {
        return Err(Error::InvalidArgument("--blue, --ell and --rho need the same length >= 2".into()));
    }
    let off = 1.0 / (m - 1) as f64;
    let q: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| if i == j { 0.0 } else { off }).collect()).collect();
    let seeds = cell_seeds(global.seed, 0, args.seeds);
    let report = coupling_check(&args.blue, &args.ell, &args.rho, &q, args.t, &seeds, global.jobs)?;
    write_table(&manifest.output("coupling.csv"), &[("seed", global.seed.to_string())], std::slice::from_ref(&report))?;
    let detail = format!(
        "chi2={:.3} dof={} p={:.4}; mean |B+R|={:.4} (expected {:.4}, se {:.4}); identity failures {}",
        report.chi_square,
        report.dof,
        report.p_value,
        report.mean_blue_red,
        report.expected_blue_red,
        report.se_blue_red,
        report.identity_failures
    );
    Ok(Check { check: "coupling", passed: report.passed(), detail })
}

#[derive(Serialize)]
struct KurtzRow {
    m: usize,
    seed: u64,
    deviation: f64,
}

#[derive(Serialize)]
struct KurtzSummaryRow {
    m: usize,
    seeds: usize,
    mean: f64,
    sd: f64,
    std_error: f64,
}

fn kurtz(args: &KurtzArgs, global: &Global, manifest: &mut RunManifest) -> Result<Check> {
    if args.m_list.is_empty() || args.seeds < 2 {
        return Err(Error::InvalidArgument("need at least one size and two seeds".into()));
    }
    let opts = KurtzOptions::default();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (cell, &m) in args.m_list.iter().enumerate() {
        let seeds = cell_seeds(global.seed, cell as u64, args.seeds);
        let devs = replicate(&seeds, global.jobs, |seed| {
            kurtz_deviation(m, args.lambda, args.beta, &[1.0], args.t_end, seed, &opts)
        })?;
        rows.extend(seeds.iter().zip(&devs).map(|(&seed, &deviation)| KurtzRow { m, seed, deviation }));
        let s = summarize(&devs)?;
        summary.push(KurtzSummaryRow { m, seeds: s.n, mean: s.mean, sd: s.sd, std_error: s.std_error() });
    }
    let comments = [("seed", global.seed.to_string())];
    write_table(&manifest.output("kurtz.csv"), &comments, &rows)?;
    write_table(&manifest.output("kurtz_summary.csv"), &comments, &summary)?;
    let decreasing = summary.windows(2).all(|w| w[1].mean < w[0].mean);
    let last = summary.last().expect("non-empty m list");
    let detail = summary.iter().map(|s| format!("m={}: {:.4}", s.m, s.mean)).collect::<Vec<_>>().join(", ");
    Ok(Check {
        check: "kurtz",
        passed: decreasing && last.mean < args.threshold,
        detail: format!("mean sup-L1 {detail}; threshold {} at m={}", args.threshold, last.m),
    })
}

fn lyapunov(args: &LyapunovArgs, manifest: &mut RunManifest) -> Result<Check> {
    let config = SystemConfig::new(vec![args.mu; args.m], vec![args.lambda; args.m], args.beta, Policy::Rls)?;
    let (rows, summary) = drift_table(&config, args.eps, args.gamma, args.max_n)?;
    write_table(&manifest.output("drift.csv"), &[("K", summary.k.to_string())], &rows)?;
    let detail = format!(
        "{} states, {} outside the finite set (K={}), {} with non-negative drift, max drift {:.4}",
        summary.states, summary.checked, summary.k, summary.violations, summary.max_checked_drift
    );
    Ok(Check { check: "lyapunov", passed: summary.passed(), detail })
}

fn monotone(args: &MonotoneArgs, global: &Global, manifest: &mut RunManifest) -> Result<Check> {
    let setup = MonotonicitySetup {
        lambda: args.lambda,
        beta: args.beta,
        b_cap: args.bcap,
        pairs: args.pairs,
        tol: args.tol,
        ..MonotonicitySetup::default()
    };
    let report = monotonicity_check(&setup, global.seed)?;
    write_table(&manifest.output("monotone.csv"), &[("seed", global.seed.to_string())], std::slice::from_ref(&report))?;
    let detail = format!(
        "{} pairs, {} order violations; path violations empty/full {}/{}; L1 to fixed point {:.2e}/{:.2e}",
        report.pairs,
        report.order_violations,
        report.empty_path_violations,
        report.full_path_violations,
        report.l1_empty_to_fixed_point,
        report.l1_full_to_fixed_point
    );
    Ok(Check { check: "monotone", passed: report.passed(args.tol), detail })
}

pub(crate) fn run(args: &VerifyArgs, global: &Global) -> Result<Outcome> {
    let config = match &args.target {
        Target::Coupling(a) => json!(a),
        Target::Kurtz(a) => json!(a),
        Target::Lyapunov(a) => json!(a),
        Target::Monotone(a) => json!(a),
        Target::All => json!({
            "coupling": defaults::<CouplingArgs>(),
            "kurtz": defaults::<KurtzArgs>(),
            "lyapunov": defaults::<LyapunovArgs>(),
            "monotone": defaults::<MonotoneArgs>(),
        }),
    };
    let mut manifest = RunManifest::start(&format!("verify {}", args.target.name()), global, &config, (global.seed, global.seed))?;
    let checks = match &args.target {
        Target::Coupling(a) => vec![coupling(a, global, &mut manifest)?],
        Target::Kurtz(a) => vec![kurtz(a, global, &mut manifest)?],
        Target::Lyapunov(a) => vec![lyapunov(a, &mut manifest)?],
        Target::Monotone(a) => vec![monotone(a, global, &mut manifest)?],
        Target::All => vec![
            coupling(&defaults(), global, &mut manifest)?,
            kurtz(&defaults(), global, &mut manifest)?,
            lyapunov(&defaults(), &mut manifest)?,
            monotone(&defaults(), global, &mut manifest)?,
        ],
    };
    if checks.len() > 1 {
        write_table(&manifest.output("summary.csv"), &[], &checks)?;
    }
    for c in &checks {
        println!("{:<9} {}  {}", c.check, if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
    println!("results in {}", manifest.dir().display());
    let all_passed = checks.iter().all(|c| c.passed);
    manifest.finish(if all_passed { "passed" } else { "failed" })?;
    Ok(if all_passed { Outcome::Ok } else { Outcome::Warnings })
}
