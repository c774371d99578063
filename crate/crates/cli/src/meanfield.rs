use std::fs::File;
use std::io::BufWriter;

use clap::{Args, ValueEnum};
use migrate_sim_core::meanfield::{
    equilibrium_rls, integrate, solve_fixed_point_rlo, sojourn, sup_norm, throughput, write_distribution,
    write_fixed_point_csv, write_summary_csv, write_trajectory_csv, Field, MeanFieldRow, OdeState, RelaxOptions,
    DEFAULT_DT, DEFAULT_TOL,
};
use migrate_sim_core::{Error, Policy, Result};
use serde::Serialize;
use serde_json::json;

use crate::manifest::RunManifest;
use crate::{parse_policy, write_table, Global, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Integrate the ODE from a given start.
    Integrate,
    /// Stationary point: exact solve for RLO, two-start relaxation for RLS.
    Fixedpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Start {
    /// All servers empty.
    Empty,
    /// All servers at the truncation bound.
    Full,
}

#[derive(Debug, Clone, Args)]
pub struct MeanFieldArgs {
    #[arg(long, value_parser = parse_policy, default_value = "rlo")]
    pub policy: Policy,

    /// Per-server arrival rate (servers have unit capacity).
    #[arg(long)]
    pub lambda: f64,

    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,

    /// Truncation bound B on per-server occupancy.
    #[arg(long, default_value_t = 100)]
    pub bcap: usize,

    #[arg(long, value_enum, default_value_t = Mode::Fixedpoint)]
    pub mode: Mode,

    /// Integration end time.
    #[arg(long, default_value_t = 50.0)]
    pub t_end: f64,

    /// RK4 step (default: 1e-3 for integration, stability-limited for relaxation).
    #[arg(long)]
    pub dt: Option<f64>,

    /// Residual tolerance on the right-hand side.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,

    /// Initial condition for integration.
    #[arg(long, value_enum, default_value_t = Start::Empty)]
    pub start: Start,

    /// Record every k-th integration step.
    #[arg(long, default_value_t = 100)]
    pub every: u64,

    /// Relaxation time limit before giving up.
    #[arg(long, default_value_t = 1e5)]
    pub max_time: f64,
}

#[derive(Serialize)]
struct RelaxationLine {
    lambda: f64,
    beta: f64,
    #[serde(rename = "B")]
    b: usize,
    y: f64,
    residual: f64,
    agreement: f64,
    agreed: bool,
    time_empty: f64,
    time_full: f64,
}

fn summary_row(args: &MeanFieldArgs, y: f64, residual: f64) -> MeanFieldRow {
    MeanFieldRow {
        lambda: args.lambda,
        beta: args.beta,
        b: args.bcap,
        policy: args.policy.to_string(),
        y,
        sojourn: sojourn(y, args.lambda).unwrap_or(f64::NAN),
        throughput: throughput(y, args.lambda).unwrap_or(f64::NAN),
        residual,
    }
}

fn field(args: &MeanFieldArgs) -> Field<f64> {
    match args.policy {
        Policy::Rlo => Field::Rlo { lambda: args.lambda, beta: args.beta },
        Policy::Rls => Field::Rls { lambda: args.lambda, beta: args.beta },
    }
}

pub(crate) fn run(args: &MeanFieldArgs, global: &Global) -> Result<Outcome> {
    if !(args.lambda >= 0.0 && args.beta >= 0.0 && args.bcap >= 1 && args.tol > 0.0) {
        return Err(Error::InvalidArgument("need --lambda >= 0, --beta >= 0, --bcap >= 1, --tol > 0".into()));
    }
    if args.every == 0 {
        return Err(Error::InvalidArgument("--every must be positive".into()));
    }
    let mut manifest = RunManifest::start(
        "meanfield",
        global,
        &json!({
            "policy": args.policy,
            "lambda": args.lambda,
            "beta": args.beta,
            "B": args.bcap,
            "mode": args.mode.to_possible_value().map(|v| v.get_name().to_string()),
            "t_end": args.t_end,
            "dt": args.dt,
            "tol": args.tol,
            "start": args.start.to_possible_value().map(|v| v.get_name().to_string()),
        }),
        (global.seed, global.seed),
    )?;
    println!("policy={} lambda={} beta={} B={}", args.policy, args.lambda, args.beta, args.bcap);

    match (args.mode, args.policy) {
        (Mode::Integrate, _) => {
            let x0 = match args.start {
                Start::Empty => OdeState::empty(args.bcap),
                Start::Full => OdeState::full(args.bcap),
            };
            let dt = args.dt.unwrap_or(DEFAULT_DT);
            let traj = integrate(field(args), &x0, args.t_end, dt, args.every)?;
            write_trajectory_csv(&traj, BufWriter::new(File::create(manifest.output("trajectory.csv"))?))?;
            let (t, last) = traj.last().expect("integration records the start");
            let residual = sup_norm(&field(args).eval(last.x()));
            let y = last.mean_occupancy();
            write_summary_csv(&[summary_row(args, y, residual)], BufWriter::new(File::create(manifest.output("summary.csv"))?))?;
            println!("t={t}  mean occupancy {y:.10}  residual {residual:.3e}");
        }
        (Mode::Fixedpoint, Policy::Rlo) => {
            let fp = solve_fixed_point_rlo(args.lambda, args.beta, args.bcap, args.tol)?;
            write_fixed_point_csv(&fp, args.lambda, args.beta, BufWriter::new(File::create(manifest.output("xi.csv"))?))?;
            let row = summary_row(args, fp.y, fp.residual);
            println!(
                "y {:.12}  z {:.12}  throughput {:.10}  residual {:.3e}",
                fp.y, fp.z, row.throughput, fp.residual
            );
            write_summary_csv(&[row], BufWriter::new(File::create(manifest.output("summary.csv"))?))?;
        }
        (Mode::Fixedpoint, Policy::Rls) => {
            let opts = RelaxOptions { dt: args.dt, max_time: args.max_time };
            let eq = equilibrium_rls(args.lambda, args.beta, args.bcap, args.tol, &opts)?;
            write_distribution(eq.state.x(), "xi_k", BufWriter::new(File::create(manifest.output("xi.csv"))?))?;
            let row = summary_row(args, eq.y, eq.residual);
            println!(
                "y {:.12}  throughput {:.10}  residual {:.3e}",
                eq.y, row.throughput, eq.residual
            );
            println!(
                "two-start relaxation: L1 distance {:.3e} (empty start settled at t={:.1}, full start at t={:.1})",
                eq.agreement, eq.time_empty, eq.time_full
            );
            write_summary_csv(&[row], BufWriter::new(File::create(manifest.output("summary.csv"))?))?;
            let line = RelaxationLine {
                lambda: args.lambda,
                beta: args.beta,
                b: args.bcap,
                y: eq.y,
                residual: eq.residual,
                agreement: eq.agreement,
                agreed: eq.agreed,
                time_empty: eq.time_empty,
                time_full: eq.time_full,
            };
            write_table(&manifest.output("relaxation.csv"), &[], &[line])?;
        }
    }
    println!("results in {}", manifest.dir().display());
    manifest.finish("ok")?;
    Ok(Outcome::Ok)
}
