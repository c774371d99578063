//! Command-line front end: argument definitions, dispatch and exit codes.
//!
//! Exit codes are `0` on success, `1` on usage or configuration errors and
//! `2` when a run completed with warnings (censored replications,
//! inconclusive verdicts, failed verification checks).

mod balance;
mod manifest;
mod meanfield;
mod open;
mod verify;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use migrate_sim_core::output::write_comments;
use migrate_sim_core::{Error, Policy, Result};
use serde::Serialize;

pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_WARNINGS: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "migrate-sim", version, about = "Random load migration in parallel processor-sharing servers")]
pub struct Cli {
    /// Output directory (default: runs/<subcommand>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Replace an existing output directory.
    #[arg(long, global = true)]
    pub force: bool,

    /// Worker threads for replications (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,

    /// Base seed; replication r of sweep cell c uses seed + c*1e6 + r.
    #[arg(long, global = true, env = "MIGRATE_SIM_SEED", default_value_t = 1)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time to (ε-)balance of a closed system.
    Balance(balance::BalanceArgs),
    /// Open system: throughput from sojourn times, optional stability probe.
    Open(open::OpenArgs),
    /// Mean-field ODE: integration, RLO fixed point, RLS equilibrium.
    Meanfield(meanfield::MeanFieldArgs),
    /// Numerical checks of the coupling, Kurtz, Lyapunov and monotonicity results.
    Verify(verify::VerifyArgs),
}

impl Command {
    fn name(&self) -> String {
        match self {
            Command::Balance(_) => "balance".into(),
            Command::Open(_) => "open".into(),
            Command::Meanfield(_) => "meanfield".into(),
            Command::Verify(v) => format!("verify-{}", v.target.name()),
        }
    }
}

/// Options shared by every subcommand after parsing.
#[derive(Debug, Clone)]
pub(crate) struct Global {
    pub out: PathBuf,
    pub force: bool,
    pub jobs: Option<usize>,
    pub seed: u64,
    pub argv: Vec<String>,
}

/// Server parameters given on the command line; scalars broadcast to all
/// servers, lists set one value per server.
#[derive(Debug, Clone, Args)]
pub struct ServerArgs {
    /// Number of servers (inferred from list-valued --lambda or --mu).
    #[arg(long)]
    pub m: Option<usize>,

    /// Server capacities, scalar or comma-separated list.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub mu: Vec<f64>,

    /// Resampling clock rate per client.
    #[arg(long)]
    pub beta: Option<f64>,

    /// Migration policy.
    #[arg(long, value_parser = parse_policy)]
    pub policy: Option<Policy>,
}

pub(crate) fn parse_policy(s: &str) -> std::result::Result<Policy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Expands scalar-or-list flag values to `m` entries.
pub(crate) fn broadcast(key: &str, values: &[f64], m: usize) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; m]),
        n if n == m => Ok(values.to_vec()),
        n => Err(Error::Config { key: key.into(), message: format!("{n} values given for m = {m} servers") }),
    }
}

/// Number of servers from `--m` or the longest list flag.
pub(crate) fn resolve_m(m: Option<usize>, lists: &[(&str, &[f64])]) -> Result<usize> {
    let from_lists = lists.iter().map(|(_, v)| v.len()).filter(|&n| n > 1).max();
    match (m, from_lists) {
        (Some(0), _) => Err(Error::Config { key: "m".into(), message: "must be positive".into() }),
        (Some(m), _) => Ok(m),
        (None, Some(n)) => Ok(n),
        (None, None) => Err(Error::Config {
            key: "m".into(),
            message: "missing: pass --m or give a per-server list".into(),
        }),
    }
}

/// Creates `path` and writes `# key=value` comments followed by CSV rows
/// with a header.
pub(crate) fn write_table<R: Serialize>(path: &Path, comments: &[(&str, String)], rows: &[R]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_comments(&mut w, comments)?;
    migrate_sim_core::experiments::write_rows_csv(rows, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Result of a subcommand that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Ok,
    Warnings,
}

impl Outcome {
    fn code(self) -> i32 {
        match self {
            Outcome::Ok => EXIT_OK,
            Outcome::Warnings => EXIT_WARNINGS,
        }
    }
}

pub(crate) fn warn(message: &str) {
    eprintln!("warning: {message}");
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let name = cli.command.name();
    let global = Global {
        out: cli.out.clone().unwrap_or_else(|| Path::new("runs").join(&name)),
        force: cli.force,
        jobs: cli.jobs.map(usize::from),
        seed: cli.seed,
        argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
    };
    let result = match &cli.command {
        Command::Balance(a) => balance::run(a, &global),
        Command::Open(a) => open::run(a, &global),
        Command::Meanfield(a) => meanfield::run(a, &global),
        Command::Verify(a) => verify::run(a, &global),
    };
    match result {
        Ok(outcome) => outcome.code(),
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_expands_scalars() {
        assert_eq!(broadcast("mu", &[2.0], 3).unwrap(), vec![2.0; 3]);
        assert_eq!(broadcast("mu", &[1.0, 2.0], 2).unwrap(), vec![1.0, 2.0]);
        assert!(broadcast("mu", &[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn m_is_inferred_from_lists() {
        assert_eq!(resolve_m(None, &[("lambda", &[4.5, 0.0, 0.0])]).unwrap(), 3);
        assert_eq!(resolve_m(Some(4), &[("lambda", &[0.5])]).unwrap(), 4);
        assert!(resolve_m(None, &[("lambda", &[0.5])]).is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
